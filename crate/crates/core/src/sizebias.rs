//! Size-biased permutations: sequential weighted sampling without
//! replacement, and the equivalent exponential-clock embedding.

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SizeBiasError {
    #[error("all sizes are zero")]
    AllZero,
}

/// A size-biased ordering of the indices with positive size. Indices with
/// zero size are omitted, so the draw can be shorter than the input.
#[derive(Debug, Clone, PartialEq)]
pub struct SizeBiasedDraw {
    pub order: Vec<usize>,
}

/// Sequential sampling: each next index is chosen with probability
/// proportional to its size among the remaining ones.
pub fn size_biased_permutation(
    sizes: &[f64],
    rng: &mut impl Rng,
) -> Result<SizeBiasedDraw, SizeBiasError> {
    assert!(sizes.iter().all(|&s| s >= 0.0 && s.is_finite()));
    let mut pool: Vec<(usize, f64)> =
        sizes.iter().copied().enumerate().filter(|&(_, s)| s > 0.0).collect();
    if pool.is_empty() {
        return Err(SizeBiasError::AllZero);
    }
    let mut order = Vec::with_capacity(pool.len());
    while !pool.is_empty() {
        let total: f64 = pool.iter().map(|&(_, s)| s).sum();
        let mut target = rng.random::<f64>() * total;
        let mut pick = pool.len() - 1;
        for (k, &(_, s)) in pool.iter().enumerate() {
            if target < s {
                pick = k;
                break;
            }
            target -= s;
        }
        order.push(pool.swap_remove(pick).0);
    }
    Ok(SizeBiasedDraw { order })
}

/// Exponential embedding: sort indices by independent `Exp(size)` clocks.
/// Distributionally identical to `size_biased_permutation`.
pub fn exponential_embedding(
    sizes: &[f64],
    rng: &mut impl Rng,
) -> Result<SizeBiasedDraw, SizeBiasError> {
    assert!(sizes.iter().all(|&s| s >= 0.0 && s.is_finite()));
    let mut clocked: Vec<(f64, usize)> = sizes
        .iter()
        .enumerate()
        .filter(|&(_, &s)| s > 0.0)
        .map(|(j, &s)| (-(1.0 - rng.random::<f64>()).ln() / s, j))
        .collect();
    if clocked.is_empty() {
        return Err(SizeBiasError::AllZero);
    }
    clocked.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(SizeBiasedDraw { order: clocked.into_iter().map(|(_, j)| j).collect() })
}
