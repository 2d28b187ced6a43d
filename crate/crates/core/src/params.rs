//! Weight vectors, kernel decompositions and the three critical-regime
//! parameter maps, plus conversions from the two-type SBM and the bipartite
//! Erdos-Renyi model into the rank-2 parametrization.

use std::sync::Arc;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// 2x2 matrix stored row-major.
pub type Mat2 = [[f64; 2]; 2];

/// Default tolerance on `|PF root - 1|` for criticality checks.
pub const DEFAULT_PF_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum ParamsError {
    #[error("PF eigenvalue {0} deviates from 1 beyond tolerance")]
    PfNotCritical(f64),
    #[error("kernel entry k[{0}][{1}] is not strictly positive")]
    NonPositiveKernel(usize, usize),
    #[error("kernel is not the interacting regime form (K = I, lambda12 > 0)")]
    NotInteracting,
    #[error("kernel is not the bipartite regime form (K antidiagonal, lambda_ii >= 0)")]
    NotBipartite,
    #[error("PF root of K~ diag(mu) is {0}, not 1: SBM not critical")]
    NotCriticalSbm(f64),
    #[error("diagonal entry q{0}{0} is zero and no perturbation was supplied")]
    DegenerateDiagonal(usize),
    #[error("invalid model: {0}")]
    Invalid(String),
}

/// Finite non-increasing positive weight vector with cached power sums.
///
/// Zero entries are dropped at construction; entries are shared behind an
/// `Arc` so cloning a model spec never copies weight data.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    entries: Arc<[f64]>,
    sigma1: f64,
    sigma2: f64,
    sigma3: f64,
}

impl WeightVector {
    pub fn new(entries: impl IntoIterator<Item = f64>) -> Self {
        let mut v: Vec<f64> = entries.into_iter().filter(|&x| x != 0.0).collect();
        assert!(
            v.iter().all(|x| x.is_finite() && *x > 0.0),
            "weights must be finite and non-negative"
        );
        v.sort_unstable_by(|a, b| b.total_cmp(a));
        Self::from_sorted(v.into())
    }

    /// Constant vector `value * 1_count`.
    pub fn constant(value: f64, count: usize) -> Self {
        assert!(value > 0.0 && value.is_finite());
        Self::from_sorted(vec![value; count].into())
    }

    fn from_sorted(entries: Arc<[f64]>) -> Self {
        let mut s = [0.0; 3];
        for &w in entries.iter() {
            s[0] += w;
            s[1] += w * w;
            s[2] += w * w * w;
        }
        Self { entries, sigma1: s[0], sigma2: s[1], sigma3: s[2] }
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `sigma_p = sum_l w_l^p`; cached for p = 1, 2, 3.
    pub fn sigma(&self, p: u32) -> f64 {
        match p {
            0 => self.entries.len() as f64,
            1 => self.sigma1,
            2 => self.sigma2,
            3 => self.sigma3,
            _ => self.entries.iter().map(|w| w.powi(p as i32)).sum(),
        }
    }

    /// True when every entry equals the first (constant vectors get fast
    /// sampling paths downstream).
    pub fn is_constant(&self) -> bool {
        match self.entries.first() {
            Some(&w0) => *self.entries.last().unwrap() == w0,
            None => true,
        }
    }
}

pub fn sigma_p(w: &WeightVector, p: u32) -> f64 {
    assert!(p >= 1, "sigma_p requires p >= 1");
    w.sigma(p)
}

/// Merge two non-increasing sequences into one non-increasing sequence
/// (the multiset union; the bowtie operation).
pub fn merge_sorted(a: &[f64], b: &[f64]) -> Vec<f64> {
    debug_assert!(a.windows(2).all(|w| w[0] >= w[1]));
    debug_assert!(b.windows(2).all(|w| w[0] >= w[1]));
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if a[i] >= b[j] {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// Limit data `(beta, theta, lambda)` for one weight family.
///
/// `theta` is stored finite together with a declared bound on the dropped
/// l^3 tail. Membership in the domain where excursions of the limit are
/// well defined (`beta > 0` or infinite l^2 mass of theta) cannot be decided
/// from a finite prefix, so the caller asserts it explicitly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitTriple {
    pub beta: f64,
    pub theta: Vec<f64>,
    pub lambda: f64,
    #[serde(default)]
    pub theta_tail_l3: f64,
    #[serde(default)]
    pub in_excursion_domain: bool,
}

impl LimitTriple {
    pub fn new(beta: f64, theta: Vec<f64>, lambda: f64) -> Self {
        assert!(beta >= 0.0, "beta must be non-negative");
        assert!(theta.iter().all(|&x| x >= 0.0), "theta entries must be non-negative");
        assert!(theta.windows(2).all(|w| w[0] >= w[1]), "theta must be non-increasing");
        let theta = theta.into_iter().filter(|&x| x > 0.0).collect();
        Self { beta, theta, lambda, theta_tail_l3: 0.0, in_excursion_domain: false }
    }

    /// Caller-supplied assertion that `(beta, theta)` lies in the domain
    /// where the limit path a.s. decomposes into excursions.
    pub fn assert_in_domain(mut self) -> Self {
        self.in_excursion_domain = true;
        self
    }

    pub fn with_tail_bound(mut self, tail_l3: f64) -> Self {
        assert!(tail_l3 >= 0.0);
        self.theta_tail_l3 = tail_l3;
        self
    }

    pub fn theta_l2(&self) -> f64 {
        self.theta.iter().map(|t| t * t).sum()
    }

    pub fn theta_l3(&self) -> f64 {
        self.theta.iter().map(|t| t * t * t).sum()
    }
}

/// The kernel pair `(K, Lambda)` together with the window parameters
/// `alpha` and `c_n` of the critical parametrization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelDecomposition {
    #[serde(rename = "K")]
    pub k: Mat2,
    #[serde(rename = "Lambda")]
    pub lambda: Mat2,
    pub alpha: f64,
    pub c_n: f64,
}

impl KernelDecomposition {
    pub fn new(k: Mat2, lambda: Mat2, alpha: f64, c_n: f64) -> Result<Self, ParamsError> {
        if k[0][1] != k[1][0] || lambda[0][1] != lambda[1][0] {
            return Err(ParamsError::Invalid("K and Lambda must be symmetric".into()));
        }
        if k.iter().flatten().any(|&x| x < 0.0) {
            return Err(ParamsError::Invalid("K must be non-negative".into()));
        }
        for i in 0..2 {
            for j in 0..2 {
                if k[i][j] == 0.0 && lambda[i][j] < 0.0 {
                    return Err(ParamsError::Invalid(
                        "Lambda must be non-negative where K vanishes".into(),
                    ));
                }
            }
        }
        if c_n <= 0.0 {
            return Err(ParamsError::Invalid("c_n must be positive".into()));
        }
        Ok(Self { k, lambda, alpha, c_n })
    }

    /// Diagnostic: a genuinely rank-2 kernel has `det(K) != 0`. Rank-1
    /// embeddings (e.g. the Erdos-Renyi kernel with equal entries) are
    /// still accepted and simulated.
    pub fn is_rank2(&self) -> bool {
        self.k[0][0] * self.k[1][1] - self.k[0][1] * self.k[1][0] != 0.0
    }
}

/// Largest eigenvalue and its positive eigenvector (normalized to sum 1)
/// for a symmetric non-negative 2x2 matrix, in closed form.
pub fn pf_eigen_sym(k: &Mat2) -> (f64, [f64; 2]) {
    let (a, b, c) = (k[0][0], k[0][1], k[1][1]);
    let half_tr = 0.5 * (a + c);
    let disc = (0.5 * (a - c)).hypot(b);
    let rho = half_tr + disc;
    // eigenvector from (K - rho I) v = 0; pick the numerically safer branch
    let v = if rho - a >= rho - c { [b, rho - a] } else { [rho - c, b] };
    let v = if v[0] == 0.0 && v[1] == 0.0 {
        if a >= c {
            [1.0, 0.0]
        } else {
            [0.0, 1.0]
        }
    } else {
        v
    };
    let s = v[0] + v[1];
    (rho, [v[0] / s, v[1] / s])
}

/// Largest-modulus eigenvalue of a general non-negative 2x2 matrix.
pub fn pf_root(m: &Mat2) -> f64 {
    let tr = m[0][0] + m[1][1];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
    0.5 * (tr + disc)
}

fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

fn diag(d: [f64; 2]) -> Mat2 {
    [[d[0], 0.0], [0.0, d[1]]]
}

fn quad_form(u: &[f64; 2], m: &Mat2) -> f64 {
    u[0] * (m[0][0] * u[0] + m[0][1] * u[1]) + u[1] * (m[1][0] * u[0] + m[1][1] * u[1])
}

/// The sampled model: two weight vectors and the symmetric connection
/// matrix `Q`, optionally carrying the kernel decomposition it came from.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub w1: WeightVector,
    pub w2: WeightVector,
    pub q: Mat2,
    pub decomposition: Option<KernelDecomposition>,
}

impl ModelSpec {
    pub fn new(
        w1: WeightVector,
        w2: WeightVector,
        q: Mat2,
        decomposition: Option<KernelDecomposition>,
    ) -> Result<Self, ParamsError> {
        if q[0][1] != q[1][0] {
            return Err(ParamsError::Invalid("Q must be symmetric".into()));
        }
        if q.iter().flatten().any(|&x| !x.is_finite() || x < 0.0) {
            return Err(ParamsError::Invalid("Q entries must be finite and >= 0".into()));
        }
        Ok(Self { w1, w2, q, decomposition })
    }

    pub fn weights(&self, typ: usize) -> &WeightVector {
        match typ {
            0 => &self.w1,
            1 => &self.w2,
            _ => panic!("type index must be 0 or 1"),
        }
    }

    /// `c_n = 1 / sqrt(sigma2(w1) sigma2(w2))`.
    pub fn c_n(&self) -> f64 {
        1.0 / (self.w1.sigma(2) * self.w2.sigma(2)).sqrt()
    }

    /// Residual `Q - D^{-1/2} K D^{-1/2} - Lambda` of the critical-window
    /// parametrization, when a decomposition is attached.
    pub fn qextension_residual(&self) -> Option<Mat2> {
        let dec = self.decomposition.as_ref()?;
        let d_inv_sqrt = diag([self.w1.sigma(2).powf(-0.5), self.w2.sigma(2).powf(-0.5)]);
        let base = mat_mul(&mat_mul(&d_inv_sqrt, &dec.k), &d_inv_sqrt);
        let mut r = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                r[i][j] = self.q[i][j] - base[i][j] - dec.lambda[i][j];
            }
        }
        Some(r)
    }

    /// True when the residual stays below `tol * c_n` entrywise. Exceeding
    /// the bound is a diagnostic warning, not an error.
    pub fn residual_within(&self, tol: f64) -> bool {
        match self.qextension_residual() {
            Some(r) => {
                let bound = tol * self.c_n();
                r.iter().flatten().all(|x| x.abs() <= bound)
            }
            None => true,
        }
    }
}

// ---------------------------------------------------------------------------
// JSON form: {"w1": [...]|{"value":v,"count":n}, "w2": ..., "Q": [[..],[..]],
//            "decomposition": {...}?}
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum WeightsRepr {
    Constant { value: f64, count: usize },
    Dense(Vec<f64>),
}

impl Serialize for WeightVector {
    fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        if self.len() > 8 && self.is_constant() {
            WeightsRepr::Constant { value: self.entries[0], count: self.len() }.serialize(ser)
        } else {
            WeightsRepr::Dense(self.entries.to_vec()).serialize(ser)
        }
    }
}

impl<'de> Deserialize<'de> for WeightVector {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let repr = WeightsRepr::deserialize(de)?;
        let wv = match repr {
            WeightsRepr::Constant { value, count } => {
                if !(value.is_finite() && value > 0.0) {
                    return Err(D::Error::custom("weight value must be finite and > 0"));
                }
                WeightVector::constant(value, count)
            }
            WeightsRepr::Dense(v) => {
                if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
                    return Err(D::Error::custom("weights must be finite and >= 0"));
                }
                WeightVector::new(v)
            }
        };
        Ok(wv)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelSpecRepr {
    w1: WeightVector,
    w2: WeightVector,
    #[serde(rename = "Q")]
    q: Mat2,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    decomposition: Option<KernelDecomposition>,
}

impl Serialize for ModelSpec {
    fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        ModelSpecRepr {
            w1: self.w1.clone(),
            w2: self.w2.clone(),
            q: self.q,
            decomposition: self.decomposition.clone(),
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for ModelSpec {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let repr = ModelSpecRepr::deserialize(de)?;
        ModelSpec::new(repr.w1, repr.w2, repr.q, repr.decomposition).map_err(D::Error::custom)
    }
}

// ---------------------------------------------------------------------------
// Regime parameter maps
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegimeTag {
    Classic,
    Interacting,
    Bipartite,
}

/// Parameters of the classic-regime limit `W^{betaC, thetaC, lambdaC}` with
/// component direction `u` (the PF eigenvector of K).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicParams {
    pub u: [f64; 2],
    pub triple: LimitTriple,
}

/// Parameters of the interacting-regime limit: the two diagonal triples
/// `(beta_i, theta_i, lambda_ii)` and the coupling strength.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractingParams {
    pub z1: LimitTriple,
    pub z2: LimitTriple,
    pub lambda12: f64,
}

/// Parameters of the nearly-bipartite limit: the triple
/// `(beta1+beta2, theta1 bowtie theta2, <1, Lambda 1>)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BipartiteParams {
    pub triple: LimitTriple,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RegimeParams {
    Classic(ClassicParams),
    Interacting(InteractingParams),
    Bipartite(BipartiteParams),
}

impl RegimeParams {
    pub fn tag(&self) -> RegimeTag {
        match self {
            RegimeParams::Classic(_) => RegimeTag::Classic,
            RegimeParams::Interacting(_) => RegimeTag::Interacting,
            RegimeParams::Bipartite(_) => RegimeTag::Bipartite,
        }
    }
}

/// Classic regime map: `u` is the right PF eigenvector of `K` normalized to
/// sum 1, and the limit triple mixes the per-type limits along `u`.
pub fn classic_params(
    dec: &KernelDecomposition,
    limits: (&LimitTriple, &LimitTriple),
) -> Result<RegimeParams, ParamsError> {
    classic_params_tol(dec, limits, DEFAULT_PF_TOL)
}

pub fn classic_params_tol(
    dec: &KernelDecomposition,
    limits: (&LimitTriple, &LimitTriple),
    tol: f64,
) -> Result<RegimeParams, ParamsError> {
    for i in 0..2 {
        for j in 0..2 {
            if dec.k[i][j] <= 0.0 {
                return Err(ParamsError::NonPositiveKernel(i, j));
            }
        }
    }
    let (rho, u) = pf_eigen_sym(&dec.k);
    if (rho - 1.0).abs() > tol {
        return Err(ParamsError::PfNotCritical(rho));
    }
    let (l1, l2) = limits;
    let beta = u[0].powi(3) * l1.beta + u[1].powi(3) * l2.beta;
    let t1: Vec<f64> = l1.theta.iter().map(|t| u[0] * t).collect();
    let t2: Vec<f64> = l2.theta.iter().map(|t| u[1] * t).collect();
    let theta = merge_sorted(&t1, &t2);
    let lambda = quad_form(&u, &dec.lambda);
    let tail = u[0].powi(3) * l1.theta_tail_l3 + u[1].powi(3) * l2.theta_tail_l3;
    let triple = LimitTriple::new(beta, theta, lambda).with_tail_bound(tail);
    let triple = if l1.in_excursion_domain || l2.in_excursion_domain {
        triple.assert_in_domain()
    } else {
        triple
    };
    Ok(RegimeParams::Classic(ClassicParams { u, triple }))
}

/// Interacting regime map: requires `K = I` and a positive coupling.
pub fn interacting_params(
    dec: &KernelDecomposition,
    limits: (&LimitTriple, &LimitTriple),
) -> Result<RegimeParams, ParamsError> {
    interacting_params_tol(dec, limits, DEFAULT_PF_TOL)
}

pub fn interacting_params_tol(
    dec: &KernelDecomposition,
    limits: (&LimitTriple, &LimitTriple),
    tol: f64,
) -> Result<RegimeParams, ParamsError> {
    let identity_ok = (dec.k[0][0] - 1.0).abs() <= tol
        && (dec.k[1][1] - 1.0).abs() <= tol
        && dec.k[0][1].abs() <= tol;
    let lambda12 = dec.lambda[0][1];
    if !identity_ok || lambda12 <= 0.0 {
        return Err(ParamsError::NotInteracting);
    }
    let (l1, l2) = limits;
    let mk = |l: &LimitTriple, lam: f64| {
        let t = LimitTriple::new(l.beta, l.theta.clone(), lam).with_tail_bound(l.theta_tail_l3);
        if l.in_excursion_domain {
            t.assert_in_domain()
        } else {
            t
        }
    };
    Ok(RegimeParams::Interacting(InteractingParams {
        z1: mk(l1, dec.lambda[0][0]),
        z2: mk(l2, dec.lambda[1][1]),
        lambda12,
    }))
}

/// Nearly-bipartite regime map: requires `K` antidiagonal and non-negative
/// diagonal drift entries; the merged drift is `<1, Lambda 1>`.
pub fn bipartite_params(
    dec: &KernelDecomposition,
    limits: (&LimitTriple, &LimitTriple),
) -> Result<RegimeParams, ParamsError> {
    bipartite_params_tol(dec, limits, DEFAULT_PF_TOL)
}

pub fn bipartite_params_tol(
    dec: &KernelDecomposition,
    limits: (&LimitTriple, &LimitTriple),
    tol: f64,
) -> Result<RegimeParams, ParamsError> {
    let anti_ok = dec.k[0][0].abs() <= tol
        && dec.k[1][1].abs() <= tol
        && (dec.k[0][1] - 1.0).abs() <= tol;
    if !anti_ok || dec.lambda[0][0] < 0.0 || dec.lambda[1][1] < 0.0 {
        return Err(ParamsError::NotBipartite);
    }
    let (l1, l2) = limits;
    let beta = l1.beta + l2.beta;
    let theta = merge_sorted(&l1.theta, &l2.theta);
    let drift = dec.lambda[0][0] + 2.0 * dec.lambda[0][1] + dec.lambda[1][1];
    let triple = LimitTriple::new(beta, theta, drift)
        .with_tail_bound(l1.theta_tail_l3 + l2.theta_tail_l3);
    let triple = if l1.in_excursion_domain || l2.in_excursion_domain {
        triple.assert_in_domain()
    } else {
        triple
    };
    Ok(RegimeParams::Bipartite(BipartiteParams { triple }))
}

// ---------------------------------------------------------------------------
// Conversions from SBM and bipartite Erdos-Renyi parametrizations
// ---------------------------------------------------------------------------

/// Output of a model conversion: the sampled spec and the per-type limit
/// triples implied by the family.
#[derive(Debug, Clone)]
pub struct Conversion {
    pub spec: ModelSpec,
    pub limits: (LimitTriple, LimitTriple),
}

/// Converts a two-type SBM `(n_i = mu_i n + b_i n^{2/3}, p_ij = k_ij/n +
/// a_ij/n^{4/3})` into the rank-2 parametrization with constant weights
/// `w^i = mu_i^{-1/2} n^{-2/3} 1_{n_i}`.
pub fn sbm_to_rank2(
    n1: usize,
    n2: usize,
    k_tilde: &Mat2,
    a_tilde: &Mat2,
    mu: [f64; 2],
    b: [f64; 2],
) -> Result<Conversion, ParamsError> {
    sbm_to_rank2_tol(n1, n2, k_tilde, a_tilde, mu, b, DEFAULT_PF_TOL)
}

pub fn sbm_to_rank2_tol(
    n1: usize,
    n2: usize,
    k_tilde: &Mat2,
    a_tilde: &Mat2,
    mu: [f64; 2],
    b: [f64; 2],
    tol: f64,
) -> Result<Conversion, ParamsError> {
    if mu[0] <= 0.0 || mu[1] <= 0.0 || (mu[0] + mu[1] - 1.0).abs() > 1e-12 {
        return Err(ParamsError::Invalid("mu must be positive with mu1 + mu2 = 1".into()));
    }
    if k_tilde[0][1] != k_tilde[1][0] || a_tilde[0][1] != a_tilde[1][0] {
        return Err(ParamsError::Invalid("k~ and a~ must be symmetric".into()));
    }
    let m_tilde = mat_mul(k_tilde, &diag(mu));
    let rho = pf_root(&m_tilde);
    if (rho - 1.0).abs() > tol {
        return Err(ParamsError::NotCriticalSbm(rho));
    }

    let n = (n1 + n2) as f64;
    let scale = n.powf(-2.0 / 3.0);
    let w1 = WeightVector::constant(mu[0].powf(-0.5) * scale, n1);
    let w2 = WeightVector::constant(mu[1].powf(-0.5) * scale, n2);

    let d_sqrt = diag([mu[0].sqrt(), mu[1].sqrt()]);
    let d_inv_sqrt = diag([mu[0].powf(-0.5), mu[1].powf(-0.5)]);
    let b_diag = diag(b);
    let k = mat_mul(&mat_mul(&d_sqrt, k_tilde), &d_sqrt);
    let term_a = mat_mul(&mat_mul(&d_sqrt, a_tilde), &d_sqrt);
    let term_b = mat_mul(&mat_mul(&mat_mul(&d_inv_sqrt, &b_diag), k_tilde), &d_sqrt);
    let term_c = mat_mul(&mat_mul(&mat_mul(&d_sqrt, k_tilde), &b_diag), &d_inv_sqrt);
    let mut lambda = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            lambda[i][j] = term_a[i][j] + 0.5 * term_b[i][j] + 0.5 * term_c[i][j];
        }
    }
    // enforce exact symmetry against rounding of the two transposed halves
    let off = 0.5 * (lambda[0][1] + lambda[1][0]);
    lambda[0][1] = off;
    lambda[1][0] = off;

    let c_n = 1.0 / (w1.sigma(2) * w2.sigma(2)).sqrt();
    let alpha = 0.5 * (b[0] / mu[0] - b[1] / mu[1]);
    let dec = KernelDecomposition::new(k, lambda, alpha, c_n)?;

    // Q assembled with zero residual from the decomposition
    let d_inv = diag([w1.sigma(2).powf(-0.5), w2.sigma(2).powf(-0.5)]);
    let base = mat_mul(&mat_mul(&d_inv, &k), &d_inv);
    let mut q = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            q[i][j] = base[i][j] + lambda[i][j];
        }
    }
    let qoff = 0.5 * (q[0][1] + q[1][0]);
    q[0][1] = qoff;
    q[1][0] = qoff;
    if q.iter().flatten().any(|&x| x < 0.0) {
        return Err(ParamsError::Invalid("converted Q has negative entries; n too small".into()));
    }

    let spec = ModelSpec::new(w1, w2, q, Some(dec.clone()))?;
    let limits = (
        LimitTriple::new(mu[0].powf(-0.5), vec![], dec.lambda[0][0]).assert_in_domain(),
        LimitTriple::new(mu[1].powf(-0.5), vec![], dec.lambda[1][1]).assert_in_domain(),
    );
    Ok(Conversion { spec, limits })
}

/// Clustering regimes of the critical bipartite Erdos-Renyi model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusterRegime {
    Light,
    Moderate(f64),
    Heavy,
}

/// Converts the bipartite Erdos-Renyi model `B(n, m, p)` at criticality into
/// the rank-2 parametrization.
pub fn bip_er_to_rank2(
    n: usize,
    m: usize,
    lambda12: f64,
    regime: ClusterRegime,
) -> Result<Conversion, ParamsError> {
    if n == 0 || m == 0 {
        return Err(ParamsError::Invalid("n, m must be >= 1".into()));
    }
    if let ClusterRegime::Moderate(theta) = regime {
        if theta <= 0.0 {
            return Err(ParamsError::Invalid("moderate regime requires theta > 0".into()));
        }
    }
    let nf = n as f64;
    let mf = m as f64;
    let (w1, w2, limits) = match regime {
        ClusterRegime::Light => (
            WeightVector::constant(nf.powf(-2.0 / 3.0), n),
            WeightVector::constant(nf.powf(-1.0 / 6.0) * mf.powf(-0.5), m),
            (
                LimitTriple::new(1.0, vec![], 0.0).assert_in_domain(),
                LimitTriple::new(0.0, vec![], 0.0),
            ),
        ),
        ClusterRegime::Moderate(theta) => (
            WeightVector::constant(nf.powf(-2.0 / 3.0), n),
            WeightVector::constant(nf.powf(-1.0 / 6.0) * mf.powf(-0.5), m),
            (
                LimitTriple::new(1.0, vec![], 0.0).assert_in_domain(),
                LimitTriple::new(theta.sqrt(), vec![], 0.0).assert_in_domain(),
            ),
        ),
        ClusterRegime::Heavy => (
            WeightVector::constant(mf.powf(-1.0 / 6.0) * nf.powf(-0.5), n),
            WeightVector::constant(mf.powf(-2.0 / 3.0), m),
            (
                LimitTriple::new(0.0, vec![], 0.0),
                LimitTriple::new(1.0, vec![], 0.0).assert_in_domain(),
            ),
        ),
    };
    let c_n = 1.0 / (w1.sigma(2) * w2.sigma(2)).sqrt();
    let q12 = c_n + lambda12;
    if q12 < 0.0 {
        return Err(ParamsError::Invalid("q12 negative: |lambda12| too large for n".into()));
    }
    let q = [[0.0, q12], [q12, 0.0]];
    let dec = KernelDecomposition::new(
        [[0.0, 1.0], [1.0, 0.0]],
        [[0.0, lambda12], [lambda12, 0.0]],
        0.0,
        c_n,
    )?;
    let spec = ModelSpec::new(w1, w2, q, Some(dec))?;
    Ok(Conversion { spec, limits })
}

/// Output of the bipartite reparametrization that restores strictly positive
/// diagonal connection rates.
#[derive(Debug, Clone)]
pub struct BipartiteReparam {
    /// `eps_i = lambda_ii^(n) / (c_n + lambda12^(n))`
    pub eps: [f64; 2],
    /// shared clock rate `q = c_n + lambda12^(n)`
    pub q_shared: f64,
    /// rescaled connection matrix
    pub q_tilde: Mat2,
    /// rescaled weights `eps_i * w^i`
    pub w_tilde: (WeightVector, WeightVector),
    /// the (possibly perturbed) original Q actually reparametrized
    pub q_used: Mat2,
}

/// Default diagonal perturbation for the asymptotic-equivalence step:
/// `c_n^{-2}` vanishes faster than every scale in the problem.
pub fn default_reparam_delta(c_n: f64) -> f64 {
    c_n.powi(-2)
}

/// Rescales a nearly-bipartite spec so that `q~_ii > 0` while the edge law
/// is unchanged (`eps_i eps_j q~_ji = q_ji` exactly).
///
/// A vanishing diagonal entry needs the perturbation `delta` added first;
/// with `delta = None` such a spec is rejected. `bipartite_reparam_default`
/// supplies `default_reparam_delta(c_n)`.
pub fn bipartite_reparam(
    spec: &ModelSpec,
    delta: Option<f64>,
) -> Result<BipartiteReparam, ParamsError> {
    let c_n = spec.c_n();
    let mut q = spec.q;
    for (i, row) in q.iter_mut().enumerate() {
        if row[i] == 0.0 {
            let d = match delta {
                Some(d) if d > 0.0 => d,
                _ => return Err(ParamsError::DegenerateDiagonal(i + 1)),
            };
            row[i] = d;
        }
    }
    let lambda12_n = q[0][1] - c_n;
    let q_shared = c_n + lambda12_n; // = q[0][1]
    if q_shared <= 0.0 {
        return Err(ParamsError::Invalid("c_n + lambda12 must be positive".into()));
    }
    let eps = [q[0][0] / q_shared, q[1][1] / q_shared];
    let q_tilde = [
        [q_shared / eps[0], q_shared / (eps[0] * eps[1])],
        [q_shared / (eps[0] * eps[1]), q_shared / eps[1]],
    ];
    let w_tilde = (
        WeightVector::new(spec.w1.entries().iter().map(|w| eps[0] * w)),
        WeightVector::new(spec.w2.entries().iter().map(|w| eps[1] * w)),
    );
    Ok(BipartiteReparam { eps, q_shared, q_tilde, w_tilde, q_used: q })
}

/// `bipartite_reparam` with the default perturbation for vanishing
/// diagonals.
pub fn bipartite_reparam_default(spec: &ModelSpec) -> Result<BipartiteReparam, ParamsError> {
    bipartite_reparam(spec, Some(default_reparam_delta(spec.c_n())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigma_p_basics() {
        let w = WeightVector::new([0.5, 0.5]);
        assert_eq!(sigma_p(&w, 2), 0.5);
        let empty = WeightVector::new([]);
        assert_eq!(sigma_p(&empty, 3), 0.0);
        // constant vector: sigma3 / sigma2^3 = 1 exactly for w = n^{-2/3} 1_n
        let n = 8usize;
        let w = WeightVector::constant((n as f64).powf(-2.0 / 3.0), n);
        let ratio = sigma_p(&w, 3) / sigma_p(&w, 2).powi(3);
        assert!((ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sigma_p_homogeneous() {
        let w = WeightVector::new([3.0, 1.5, 0.25]);
        for p in 1..=4u32 {
            let c = 1.7f64;
            let scaled = WeightVector::new(w.entries().iter().map(|x| c * x));
            let lhs = sigma_p(&scaled, p);
            let rhs = c.powi(p as i32) * sigma_p(&w, p);
            assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0));
        }
    }

    #[test]
    fn merge_sorted_cases() {
        assert_eq!(merge_sorted(&[3.0, 1.0], &[2.0]), vec![3.0, 2.0, 1.0]);
        assert_eq!(merge_sorted(&[2.0, 1.0], &[]), vec![2.0, 1.0]);
        assert_eq!(merge_sorted(&[1.0, 1.0], &[1.0]), vec![1.0, 1.0, 1.0]);
    }

    proptest::proptest! {
        #[test]
        fn merge_sorted_is_sorted_multiset_union(
            mut a in proptest::collection::vec(0.0f64..10.0, 0..20),
            mut b in proptest::collection::vec(0.0f64..10.0, 0..20),
        ) {
            a.sort_by(|x, y| y.total_cmp(x));
            b.sort_by(|x, y| y.total_cmp(x));
            let merged = merge_sorted(&a, &b);
            proptest::prop_assert_eq!(merged.len(), a.len() + b.len());
            proptest::prop_assert!(merged.windows(2).all(|w| w[0] >= w[1]));
            let mut union: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
            union.sort_by(|x, y| y.total_cmp(x));
            proptest::prop_assert_eq!(merged, union);
        }

        #[test]
        fn sigma_p_homogeneity_prop(
            w in proptest::collection::vec(0.01f64..5.0, 1..15),
            c in 0.1f64..4.0,
            p in 1u32..5,
        ) {
            let base = WeightVector::new(w.clone());
            let scaled = WeightVector::new(w.iter().map(|x| c * x));
            let lhs = sigma_p(&scaled, p);
            let rhs = c.powi(p as i32) * sigma_p(&base, p);
            proptest::prop_assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs().max(1.0));
        }
    }

    #[test]
    fn zero_weights_dropped_and_sorted() {
        let w = WeightVector::new([0.0, 2.0, 0.0, 3.0]);
        assert_eq!(w.entries(), &[3.0, 2.0]);
    }

    fn dec(k: Mat2, lambda: Mat2) -> KernelDecomposition {
        KernelDecomposition::new(k, lambda, 0.0, 100.0).unwrap()
    }

    fn trivial_limits() -> (LimitTriple, LimitTriple) {
        (LimitTriple::new(1.0, vec![], 0.0), LimitTriple::new(1.0, vec![], 0.0))
    }

    #[test]
    fn classic_symmetric_half() {
        let d = dec([[0.5, 0.5], [0.5, 0.5]], [[1.0, 0.0], [0.0, 1.0]]);
        let (l1, l2) = trivial_limits();
        let rp = classic_params(&d, (&l1, &l2)).unwrap();
        let RegimeParams::Classic(cp) = rp else { panic!() };
        assert!((cp.u[0] - 0.5).abs() < 1e-12 && (cp.u[1] - 0.5).abs() < 1e-12);
        // betaC = (1/2)^3 + (1/2)^3 = 1/4
        assert!((cp.triple.beta - 0.25).abs() < 1e-12);
        // lambdaC = <u, I u> = 1/2
        assert!((cp.triple.lambda - 0.5).abs() < 1e-12);
    }

    #[test]
    fn classic_theta_merge_is_symmetric() {
        let d = dec([[0.5, 0.5], [0.5, 0.5]], [[0.0; 2]; 2]);
        let l1 = LimitTriple::new(0.0, vec![3.0, 1.0], 0.0);
        let l2 = LimitTriple::new(0.0, vec![2.0], 0.0);
        let RegimeParams::Classic(a) = classic_params(&d, (&l1, &l2)).unwrap() else { panic!() };
        let RegimeParams::Classic(b) = classic_params(&d, (&l2, &l1)).unwrap() else { panic!() };
        assert_eq!(a.triple.theta, b.triple.theta);
        assert_eq!(a.triple.theta, vec![1.5, 1.0, 0.5]);
    }

    #[test]
    fn classic_rejects_supercritical_and_nonpositive() {
        let (l1, l2) = trivial_limits();
        let d = dec([[1.0, 1.0], [1.0, 1.0]], [[0.0; 2]; 2]);
        assert!(matches!(classic_params(&d, (&l1, &l2)), Err(ParamsError::PfNotCritical(_))));
        let d = dec([[1.0, 0.0], [0.0, 1.0]], [[0.0; 2]; 2]);
        assert!(matches!(
            classic_params(&d, (&l1, &l2)),
            Err(ParamsError::NonPositiveKernel(_, _))
        ));
    }

    #[test]
    fn classic_pf_invariant_on_random_kernels() {
        // random critical symmetric positive kernels: K u = u, |u|_1 = 1
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..200 {
            let a = 0.05 + 0.9 * next();
            let c = 0.05 + 0.9 * next();
            // b chosen so the PF root is exactly 1 (needs a, c < 1)
            let b = ((1.0 - a) * (1.0 - c)).sqrt();
            let d = dec([[a, b], [b, c]], [[0.0; 2]; 2]);
            let (l1, l2) = trivial_limits();
            let RegimeParams::Classic(cp) = classic_params(&d, (&l1, &l2)).unwrap() else {
                panic!()
            };
            let ku = [a * cp.u[0] + b * cp.u[1], b * cp.u[0] + c * cp.u[1]];
            assert!((ku[0] - cp.u[0]).abs() <= 1e-9 && (ku[1] - cp.u[1]).abs() <= 1e-9);
            assert!((cp.u[0] + cp.u[1] - 1.0).abs() <= 1e-12);
            assert!(cp.u[0] > 0.0 && cp.u[1] > 0.0);
        }
    }

    #[test]
    fn interacting_params_cases() {
        let (l1, l2) = trivial_limits();
        let id = [[1.0, 0.0], [0.0, 1.0]];
        let d = dec(id, [[0.0, 1.0], [1.0, 0.0]]);
        let RegimeParams::Interacting(ip) = interacting_params(&d, (&l1, &l2)).unwrap() else {
            panic!()
        };
        assert_eq!(ip.lambda12, 1.0);
        let d = dec(id, [[0.5, 0.0], [0.0, 0.5]]);
        assert_eq!(interacting_params(&d, (&l1, &l2)), Err(ParamsError::NotInteracting));
        let d = dec([[1.0, 0.1], [0.1, 1.0]], [[0.0, 1.0], [1.0, 0.0]]);
        assert_eq!(interacting_params(&d, (&l1, &l2)), Err(ParamsError::NotInteracting));
    }

    #[test]
    fn bipartite_params_cases() {
        let anti = [[0.0, 1.0], [1.0, 0.0]];
        let l1 = LimitTriple::new(1.0, vec![], 0.0);
        let l2 = LimitTriple::new(0.0, vec![], 0.0);
        let d = dec(anti, [[0.0; 2]; 2]);
        let RegimeParams::Bipartite(bp) = bipartite_params(&d, (&l1, &l2)).unwrap() else {
            panic!()
        };
        assert_eq!(bp.triple.beta, 1.0);
        assert!(bp.triple.theta.is_empty());
        assert_eq!(bp.triple.lambda, 0.0);

        let d = dec(anti, [[1.0, 2.0], [2.0, 3.0]]);
        let RegimeParams::Bipartite(bp) = bipartite_params(&d, (&l1, &l2)).unwrap() else {
            panic!()
        };
        assert_eq!(bp.triple.lambda, 8.0);

        // negative diagonal Lambda where K vanishes is rejected at construction
        assert!(KernelDecomposition::new(anti, [[-1.0, 0.0], [0.0, 0.0]], 0.0, 1.0).is_err());
    }

    #[test]
    fn sbm_conversion_symmetric_case() {
        // mu = (1/2, 1/2), k~ = 1 everywhere: PF root of K~ diag(mu) = 1
        let k = [[1.0, 1.0], [1.0, 1.0]];
        let a = [[0.0; 2]; 2];
        let conv = sbm_to_rank2(500, 500, &k, &a, [0.5, 0.5], [0.0, 0.0]).unwrap();
        let d = conv.spec.decomposition.as_ref().unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((d.k[i][j] - 0.5).abs() < 1e-12);
                assert_eq!(d.lambda[i][j], 0.0);
            }
        }
        // b = 0, a~ = 0 gives Lambda = 0 regardless of k~ (critical or not)
        let k2 = [[0.4, 1.3], [1.3, 0.2]];
        let conv2 = sbm_to_rank2_tol(500, 500, &k2, &a, [0.5, 0.5], [0.0, 0.0], 10.0).unwrap();
        let d2 = conv2.spec.decomposition.as_ref().unwrap();
        assert!(d2.lambda.iter().flatten().all(|&x| x == 0.0));
        // non-critical k~ rejected at default tolerance
        assert!(matches!(
            sbm_to_rank2(500, 500, &k2, &a, [0.5, 0.5], [0.0, 0.0]),
            Err(ParamsError::NotCriticalSbm(_))
        ));
    }

    #[test]
    fn sbm_lambda_symmetry_and_eigenvector_relation() {
        // mu = (1/4, 3/4); k~ with PF root of K~ diag(mu) equal to 1:
        // for x = z = 1 this needs (1 - mu1)(1 - mu2) = y^2 mu1 mu2.
        let mu = [0.25f64, 0.75];
        let y = ((1.0 - mu[0]) * (1.0 - mu[1]) / (mu[0] * mu[1])).sqrt();
        let k = [[1.0, y], [y, 1.0]];
        let a = [[0.3, -0.2], [-0.2, 0.1]];
        let b = [1.0, -1.0];
        let conv = sbm_to_rank2(2500, 7500, &k, &a, mu, b).unwrap();
        let d = conv.spec.decomposition.as_ref().unwrap();
        assert_eq!(d.lambda[0][1], d.lambda[1][0]);
        assert!(d.lambda.iter().flatten().all(|x| x.is_finite()));

        // uC = D~^{1/2} u~ normalized, where u~ is the PF eigenvector of K~ D~
        let m = [[k[0][0] * mu[0], k[0][1] * mu[1]], [k[1][0] * mu[0], k[1][1] * mu[1]]];
        let rho = pf_root(&m);
        assert!((rho - 1.0).abs() < 1e-12);
        let ut = [m[0][1], 1.0 - m[0][0]];
        let uc_raw = [mu[0].sqrt() * ut[0], mu[1].sqrt() * ut[1]];
        let s = uc_raw[0] + uc_raw[1];
        let uc_expect = [uc_raw[0] / s, uc_raw[1] / s];
        let (_, uc) = pf_eigen_sym(&d.k);
        assert!((uc[0] - uc_expect[0]).abs() < 1e-9);
        assert!((uc[1] - uc_expect[1]).abs() < 1e-9);
    }

    #[test]
    fn bip_er_light_weights() {
        let n = 1000usize;
        let conv = bip_er_to_rank2(n, n, 0.5, ClusterRegime::Light).unwrap();
        let s2 = (n as f64).powf(-1.0 / 3.0);
        assert!((conv.spec.w1.sigma(2) - s2).abs() < 1e-12 * s2);
        assert!((conv.spec.w2.sigma(2) - s2).abs() < 1e-12 * s2);
        // q12 = n^{1/3} + lambda12 up to the float error of sigma2 products
        let q12 = conv.spec.q[0][1];
        assert!((q12 - ((n as f64).powf(1.0 / 3.0) + 0.5)).abs() < 1e-9);
        // edge probability 1 - exp(-q12 w1 w2) = (1 + lambda12 n^{-1/3} + o) / sqrt(nm)
        let p = 1.0 - (-q12 * conv.spec.w1.entries()[0] * conv.spec.w2.entries()[0]).exp();
        let nf = n as f64;
        let expect = (1.0 + 0.5 * nf.powf(-1.0 / 3.0)) / nf;
        assert!((p - expect).abs() < 3.0 / (nf * nf));
    }

    #[test]
    fn bip_er_moderate_limit() {
        let conv = bip_er_to_rank2(1000, 2000, 0.0, ClusterRegime::Moderate(2.0)).unwrap();
        assert!((conv.limits.1.beta - 2.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn reparam_round_trip() {
        let w = WeightVector::constant(0.1, 10);
        let c_n = 1.0 / (w.sigma(2) * w.sigma(2)).sqrt();
        let q12 = c_n + 0.3;
        let spec = ModelSpec::new(w.clone(), w.clone(), [[2.0, q12], [q12, 1.0]], None).unwrap();
        let rp = bipartite_reparam(&spec, None).unwrap();
        assert!((rp.eps[0] - 2.0 / q12).abs() < 1e-14);
        for i in 0..2 {
            for j in 0..2 {
                let back = rp.eps[i] * rp.eps[j] * rp.q_tilde[j][i];
                let orig = spec.q[j][i];
                assert!((back - orig).abs() <= 1e-12 * orig.abs().max(1.0));
            }
        }
        // eps example: lambda11 = 2, c_n + lambda12 = 100 -> eps1 = 0.02
        let spec2 =
            ModelSpec::new(w.clone(), w.clone(), [[2.0, 100.0], [100.0, 3.0]], None).unwrap();
        let rp2 = bipartite_reparam(&spec2, None).unwrap();
        assert!((rp2.eps[0] - 0.02).abs() < 1e-14);

        // degenerate diagonal without a supplied perturbation
        let spec3 = ModelSpec::new(w.clone(), w, [[0.0, q12], [q12, 1.0]], None).unwrap();
        assert!(matches!(
            bipartite_reparam(&spec3, None),
            Err(ParamsError::DegenerateDiagonal(1))
        ));
        // the default perturbation restores positive diagonals
        let rp3 = bipartite_reparam_default(&spec3).unwrap();
        assert!(rp3.q_used[0][0] > 0.0 && rp3.eps[0] > 0.0);
    }

    #[test]
    fn model_spec_json_round_trip() {
        let conv = bip_er_to_rank2(100, 200, 0.25, ClusterRegime::Light).unwrap();
        let json = serde_json::to_string(&conv.spec).unwrap();
        // constant vectors use the compressed form
        assert!(json.contains("\"count\":100"));
        let back: ModelSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back.w1.entries(), conv.spec.w1.entries());
        assert_eq!(back.q, conv.spec.q);
        assert_eq!(back.decomposition, conv.spec.decomposition);

        let explicit =
            r#"{"w1":[0.5,0.25],"w2":{"value":0.1,"count":3},"Q":[[1.0,0.5],[0.5,1.0]]}"#;
        let spec: ModelSpec = serde_json::from_str(explicit).unwrap();
        assert_eq!(spec.w2.len(), 3);
        assert!(spec.decomposition.is_none());
    }

    #[test]
    fn residual_check() {
        let conv = bip_er_to_rank2(64, 64, 0.0, ClusterRegime::Light).unwrap();
        assert!(conv.spec.residual_within(1e-6));
        assert!(conv
            .spec
            .qextension_residual()
            .unwrap()
            .iter()
            .flatten()
            .all(|r| r.abs() < 1e-9));
    }
}
