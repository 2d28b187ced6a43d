//! Two-sample test statistics and small numerical helpers for the
//! experiment harness.

use std::collections::HashMap;
use std::hash::Hash;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("empty sample")]
    EmptySample,
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = xs.iter().copied().filter(|x| x.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Classical two-sample Kolmogorov-Smirnov statistic with the asymptotic
/// p-value `Q_KS((sqrt(ne) + 0.12 + 0.11/sqrt(ne)) D)`, `ne = mn/(m+n)`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<(f64, f64), StatsError> {
    let a = sorted(a);
    let b = sorted(b);
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let (na, nb) = (a.len(), b.len());
    let mut stat = 0.0f64;
    let (mut i, mut j) = (0usize, 0usize);
    while i < na && j < nb {
        let x = a[i].min(b[j]);
        while i < na && a[i] <= x {
            i += 1;
        }
        while j < nb && b[j] <= x {
            j += 1;
        }
        let d = (i as f64 / na as f64 - j as f64 / nb as f64).abs();
        if d > stat {
            stat = d;
        }
    }
    let ne = (na as f64 * nb as f64) / (na + nb) as f64;
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * stat;
    Ok((stat, ks_q(lambda)))
}

/// Kolmogorov tail function `Q(lambda) = 2 sum_{j>=1} (-1)^{j-1}
/// exp(-2 j^2 lambda^2)`.
pub fn ks_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let term = (-2.0 * (j as f64 * lambda).powi(2)).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Order-statistic (quantile-coupling) Wasserstein-1 distance: empirical
/// quantiles of both samples are compared on a common grid of
/// `max(len a, len b)` probability levels.
pub fn wasserstein1(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    let a = sorted(a);
    let b = sorted(b);
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let k = a.len().max(b.len());
    let q = |v: &[f64], u: f64| -> f64 {
        let idx = ((u * v.len() as f64) as usize).min(v.len() - 1);
        v[idx]
    };
    let mut acc = 0.0;
    for i in 0..k {
        let u = (i as f64 + 0.5) / k as f64;
        acc += (q(&a, u) - q(&b, u)).abs();
    }
    Ok(acc / k as f64)
}

/// Total-variation distance between two empirical laws given as count maps.
pub fn tv_from_counts<K: Eq + Hash + Clone>(
    a: &HashMap<K, usize>,
    na: usize,
    b: &HashMap<K, usize>,
    nb: usize,
) -> f64 {
    let mut keys: Vec<K> = a.keys().cloned().collect();
    keys.extend(b.keys().cloned());
    let mut seen = std::collections::HashSet::new();
    let mut tv = 0.0;
    for k in keys {
        if !seen.insert(k.clone()) {
            continue;
        }
        let pa = *a.get(&k).unwrap_or(&0) as f64 / na as f64;
        let pb = *b.get(&k).unwrap_or(&0) as f64 / nb as f64;
        tv += (pa - pb).abs();
    }
    tv / 2.0
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let mx = mean(xs);
    let my = mean(ys);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

/// Least-squares slope of `y = s t` through the origin.
pub fn slope_through_origin(ts: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(ts.len(), ys.len());
    let num: f64 = ts.iter().zip(ys).map(|(t, y)| t * y).sum();
    let den: f64 = ts.iter().map(|t| t * t).sum();
    num / den
}
