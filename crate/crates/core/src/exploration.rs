//! Finite-n encoding processes: the clock processes `N^i`, the scaled walks
//! `X^{j,i}`, the passage functional `U^2`, the component-encoding path `V`,
//! the bipartite tilde variants, and the first-hitting-time iteration for
//! two-component additive fields.

use rand::Rng;
use thiserror::Error;

use crate::cadlag::{compose_monotone, JumpDriftPath};
use crate::params::{BipartiteReparam, ModelSpec, WeightVector};
use crate::rng::exp_clock;

#[derive(Debug, Error, PartialEq)]
pub enum ExplorationError {
    #[error("q{0}{0} = 0: reparametrize (bipartite) before exploring")]
    ZeroDiagonal(usize),
}

/// The assembled exploration processes of one realization. All paths share
/// the exponential clocks `xi_l^i ~ Exp(w_l^i)`; vertex order follows the
/// weight rank.
#[derive(Debug, Clone)]
pub struct ExplorationBundle {
    pub n1: JumpDriftPath,
    pub n2: JumpDriftPath,
    pub x11: JumpDriftPath,
    pub x12: JumpDriftPath,
    pub x21: JumpDriftPath,
    pub x22: JumpDriftPath,
    /// passage functional of `X^{2,2}` as an exact path in the level
    /// variable
    pub u2: JumpDriftPath,
    /// the composition `U^2 o X^{2,1}`
    pub u2x21: JumpDriftPath,
    /// `X^{1,2} o U^2 o X^{2,1}`
    pub comp: JumpDriftPath,
    /// `V = X^{1,1} + X^{1,2} o U^2 o X^{2,1}`
    pub v: JumpDriftPath,
    /// exponential clocks per type (unscaled by the block rates)
    pub clocks1: Vec<f64>,
    pub clocks2: Vec<f64>,
    /// true when a passage ran out of level budget and the composition was
    /// truncated before the nominal horizon
    pub truncated: bool,
}

fn clock_jumps(
    w: &WeightVector,
    rate: f64,
    horizon: f64,
    rng: &mut impl Rng,
) -> (Vec<f64>, Vec<(f64, f64)>) {
    let mut clocks = Vec::with_capacity(w.len());
    let mut jumps = Vec::new();
    for &wl in w.entries() {
        let xi = exp_clock(wl, rng);
        clocks.push(xi);
        let t = xi / rate;
        if t <= horizon {
            jumps.push((t, wl));
        }
    }
    (clocks, jumps)
}

/// Default horizon: generous enough that every clock with non-negligible
/// contribution has fired.
pub fn default_horizon(spec: &ModelSpec) -> f64 {
    let mut h: f64 = 1.0;
    for i in 0..2 {
        let q = spec.q[i][i];
        if q > 0.0 {
            h = h.max(spec.weights(i).sigma(1) * q * 2.0 + 10.0 / q);
        }
    }
    h
}

fn assemble(
    n1: JumpDriftPath,
    n2: JumpDriftPath,
    q: [[f64; 2]; 2],
    eps_diag: Option<[f64; 2]>,
    clocks1: Vec<f64>,
    clocks2: Vec<f64>,
) -> ExplorationBundle {
    let horizon = n1.horizon();
    let down = JumpDriftPath::from_raw(-1.0, vec![], horizon);
    // diagonal walks: X^{ii} = -t + scale_i * N^i; the plain exploration has
    // scale 1, the bipartite tilde variant scales by eps_i
    let scale = eps_diag.unwrap_or([1.0, 1.0]);
    let x11 = down.add(&n1.scale_values(scale[0])).unwrap();
    let x22 = down.add(&n2.scale_values(scale[1])).unwrap();
    let x12 = n2.scale_values(q[0][1] / q[0][0]);
    let x21 = n1.scale_values(q[0][1] / q[1][1]);

    let (u2, u2_trunc) = x22.first_passage_path();
    let (u2x21, t1) = compose_monotone(&u2, &x21);
    let (comp, t2) = compose_monotone(&x12, &u2x21);
    let h_v = comp.horizon().min(horizon);
    let v = x11.restrict(h_v).add(&comp.restrict(h_v)).unwrap();
    ExplorationBundle {
        n1,
        n2,
        x11,
        x12,
        x21,
        x22,
        u2,
        u2x21,
        comp,
        v,
        clocks1,
        clocks2,
        truncated: u2_trunc || t1 || t2,
    }
}

/// Builds the exploration processes for a spec with strictly positive
/// diagonal rates: `N^i` jumps `w_l^i` at `xi_l^i / q_ii`, and
/// `V = X^{1,1} + X^{1,2} o U^2 o X^{2,1}`.
pub fn build_exploration(
    spec: &ModelSpec,
    horizon: Option<f64>,
    rng: &mut impl Rng,
) -> Result<ExplorationBundle, ExplorationError> {
    for i in 0..2 {
        if spec.q[i][i] <= 0.0 {
            return Err(ExplorationError::ZeroDiagonal(i + 1));
        }
    }
    let horizon = horizon.unwrap_or_else(|| default_horizon(spec));
    let (clocks1, jumps1) = clock_jumps(&spec.w1, spec.q[0][0], horizon, rng);
    let (clocks2, jumps2) = clock_jumps(&spec.w2, spec.q[1][1], horizon, rng);
    let n1 = JumpDriftPath::new(0.0, jumps1, horizon);
    let n2 = JumpDriftPath::new(0.0, jumps2, horizon);
    Ok(assemble(n1, n2, spec.q, None, clocks1, clocks2))
}

/// Bipartite tilde variant: both clock processes run at the shared rate
/// `q = c_n + lambda12`, the off-diagonal walks carry the raw weights, and
/// the diagonal walks are `-t + eps_i * (raw walk)`. The same clocks drive
/// both scaled and unscaled processes.
pub fn build_exploration_bp(
    spec: &ModelSpec,
    reparam: &BipartiteReparam,
    horizon: Option<f64>,
    rng: &mut impl Rng,
) -> ExplorationBundle {
    let q = reparam.q_shared;
    let horizon = horizon.unwrap_or_else(|| {
        let h1 = spec.w1.sigma(1) * q * 2.0 + 10.0 / q;
        let h2 = spec.w2.sigma(1) * q * 2.0 + 10.0 / q;
        h1.max(h2)
    });
    let (clocks1, jumps1) = clock_jumps(&spec.w1, q, horizon, rng);
    let (clocks2, jumps2) = clock_jumps(&spec.w2, q, horizon, rng);
    let n1 = JumpDriftPath::new(0.0, jumps1, horizon);
    let n2 = JumpDriftPath::new(0.0, jumps2, horizon);
    // q~12/q~11 = 1/eps2 and q~12/q~22 = 1/eps1, so the off-diagonal tilde
    // walks are exactly the raw-weight clock processes
    let q_eff = [[1.0, 1.0], [1.0, 1.0]];
    assemble(n1, n2, q_eff, Some(reparam.eps), clocks1, clocks2)
}

// ---------------------------------------------------------------------------
// Additive fields and first hitting times
// ---------------------------------------------------------------------------

/// A two-component additive field given by four cadlag paths `f[j][i]`:
/// `F^j(t1, t2) = f[j][0](t1) + f[j][1](t2)`. Diagonal components never
/// jump downwards; off-diagonal components are non-decreasing; all start
/// at 0.
#[derive(Debug, Clone)]
pub struct AdditiveField {
    pub f: [[JumpDriftPath; 2]; 2],
}

impl AdditiveField {
    pub fn new(f: [[JumpDriftPath; 2]; 2]) -> Self {
        for (j, row) in f.iter().enumerate() {
            for (i, p) in row.iter().enumerate() {
                if i == j {
                    assert!(
                        p.jumps().all(|(_, s)| s > 0.0),
                        "diagonal components must not jump downwards"
                    );
                } else {
                    assert!(
                        p.drift() >= 0.0 && p.jumps().all(|(_, s)| s > 0.0),
                        "off-diagonal components must be non-decreasing"
                    );
                }
            }
        }
        Self { f }
    }

    /// The exploration field `f[j][i] = X^{j,i}`.
    pub fn from_exploration(b: &ExplorationBundle) -> Self {
        Self::new([
            [b.x11.clone(), b.x12.clone()],
            [b.x21.clone(), b.x22.clone()],
        ])
    }
}

/// `tau(v) = inf{t : f_-(t) = -v}` for a path that never jumps downwards;
/// `+inf` when the left-limit path stays above `-v` up to the horizon.
fn tau(path: &JumpDriftPath, v: f64) -> f64 {
    if v < 0.0 {
        return 0.0;
    }
    let target = -v;
    let d = path.drift();
    let mut t = 0.0;
    let mut val = 0.0;
    if val <= target {
        return 0.0;
    }
    for (tj, s) in path.jumps() {
        if d < 0.0 {
            let v_end = val + d * (tj - t);
            if v_end <= target {
                return t + (val - target) / -d;
            }
            val = v_end;
        }
        val += s;
        t = tj;
    }
    if d < 0.0 {
        let v_end = val + d * (path.horizon() - t);
        if v_end <= target {
            return t + (val - target) / -d;
        }
    }
    f64::INFINITY
}

/// Left limit treating `+inf` as the total limit: for non-decreasing paths
/// with positive drift it diverges, otherwise it is the horizon value.
fn eval_left_ext(path: &JumpDriftPath, t: f64) -> f64 {
    if t.is_infinite() {
        if path.drift() > 0.0 {
            f64::INFINITY
        } else {
            path.eval(path.horizon()).unwrap()
        }
    } else {
        path.eval_left(t).unwrap()
    }
}

/// Minimal solution of the field hitting problem `F^j(t-) = -r_j` (for the
/// coordinates with `t_j < inf`), computed by the monotone iteration
/// `u_j <- tau^j(r_j + f^{j,i}_-(u_i))`.
pub fn field_hitting_time(field: &AdditiveField, r: [f64; 2]) -> [f64; 2] {
    field_hitting_time_trace(field, r).0
}

/// As `field_hitting_time`, also returning every iterate (for monotonicity
/// checks). The iteration is non-decreasing coordinatewise and, as a
/// monotone bounded sequence of floats, stabilizes in finitely many steps.
pub fn field_hitting_time_trace(
    field: &AdditiveField,
    r: [f64; 2],
) -> ([f64; 2], Vec<[f64; 2]>) {
    assert!(r[0] >= 0.0 && r[1] >= 0.0);
    let mut u = [0.0f64; 2];
    let mut trace = vec![u];
    let cap = 4 * (field.f.iter().flatten().map(|p| p.n_jumps()).sum::<usize>() + 2) + 200;
    for _ in 0..cap {
        let next = [
            tau(&field.f[0][0], r[0] + eval_left_ext(&field.f[0][1], u[1])),
            tau(&field.f[1][1], r[1] + eval_left_ext(&field.f[1][0], u[0])),
        ];
        debug_assert!(next[0] >= u[0] && next[1] >= u[1], "iteration must be monotone");
        if next == u {
            return (u, trace);
        }
        u = next;
        trace.push(u);
    }
    // monotone float sequences stabilize; reaching the cap means the two
    // coordinates keep exchanging sub-ulp increments
    (u, trace)
}

/// The single-process shortcut for `r = (r, 0)`:
/// `T1 = inf{t : f11_-(t) + f12_- o tau2 o f21_-(t) = -r}` and
/// `T2 = tau2(f21_-(T1))`. Requires pure-jump off-diagonal components (the
/// exploration field shape), so the inner composition is piecewise
/// constant.
pub fn single_process_t1(field: &AdditiveField, r: f64) -> (f64, f64) {
    assert!(r > 0.0);
    let f11 = &field.f[0][0];
    let f12 = &field.f[0][1];
    let f21 = &field.f[1][0];
    let f22 = &field.f[1][1];
    assert!(f12.drift() == 0.0 && f21.drift() == 0.0, "off-diagonals must be pure jump");

    // g(t) = f12_-(tau2(f21_-(t))) is constant between f21's jump times
    let mut level = {
        let t2 = tau(f22, 0.0);
        eval_left_ext(f12, t2)
    };
    let mut t_prev = 0.0f64;
    let t1 = 'found: {
        for (tj, _) in f21.jumps() {
            // descend f11 on (t_prev, tj] against the current plateau of g
            let target = r + level;
            let cand = tau(f11, target);
            if cand > t_prev && cand <= tj {
                break 'found cand;
            }
            let y = f21.eval(tj).unwrap();
            let t2 = tau(f22, y);
            level = eval_left_ext(f12, t2);
            t_prev = tj;
        }
        let cand = tau(f11, r + level);
        if cand > t_prev {
            cand
        } else {
            f64::INFINITY
        }
    };
    let t2 = if t1.is_finite() {
        tau(f22, eval_left_ext(f21, t1))
    } else {
        tau(f22, eval_left_ext(f21, f64::INFINITY))
    };
    (t1, t2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{bipartite_reparam, Mat2};
    use crate::rng::replica_rng;
    use crate::stats::mean;
    use rand::Rng;

    fn spec(w1: &[f64], w2: &[f64], q: Mat2) -> ModelSpec {
        ModelSpec::new(WeightVector::new(w1.to_vec()), WeightVector::new(w2.to_vec()), q, None)
            .unwrap()
    }

    #[test]
    fn degenerate_w2_reduces_to_rank1() {
        let s = spec(&[1.0, 0.5], &[], [[1.0, 0.5], [0.5, 1.0]]);
        let mut rng = replica_rng(20, 0);
        let b = build_exploration(&s, Some(30.0), &mut rng).unwrap();
        assert_eq!(b.x12.n_jumps(), 0);
        // V = X11 exactly
        for t in [0.0, 1.0, 5.0, 20.0] {
            assert_eq!(b.v.eval(t).unwrap(), b.x11.eval(t).unwrap());
        }
    }

    #[test]
    fn zero_diagonal_rejected() {
        let s = spec(&[1.0], &[1.0], [[0.0, 1.0], [1.0, 1.0]]);
        let mut rng = replica_rng(20, 1);
        assert_eq!(
            build_exploration(&s, None, &mut rng).unwrap_err(),
            ExplorationError::ZeroDiagonal(1)
        );
    }

    #[test]
    fn single_vertex_v_shape() {
        // one type-1 vertex of weight 1: V has one jump of size 1 at
        // xi / q11 and drift -1
        let q11 = 2.0;
        let s = spec(&[1.0], &[], [[q11, 0.5], [0.5, 1.0]]);
        let mut rng = replica_rng(21, 0);
        let b = build_exploration(&s, Some(50.0), &mut rng).unwrap();
        assert_eq!(b.v.drift(), -1.0);
        assert_eq!(b.v.n_jumps(), 1);
        let (t, size) = b.v.jumps().next().unwrap();
        assert!((size - 1.0).abs() < 1e-15);
        assert!((t - b.clocks1[0] / q11).abs() < 1e-15);
    }

    #[test]
    fn clock_process_mean_matches_closed_form() {
        // E[N^i(t)] = sum_l w_l (1 - exp(-w_l q_ii t))
        let w = [0.9, 0.5, 0.2];
        let q11 = 1.3;
        let s = spec(&w, &[0.4], [[q11, 0.6], [0.6, 0.8]]);
        let reps = 10_000;
        let t = 1.7;
        let mut rng = replica_rng(22, 0);
        let xs: Vec<f64> = (0..reps)
            .map(|_| {
                build_exploration(&s, Some(40.0), &mut rng).unwrap().n1.eval(t).unwrap()
            })
            .collect();
        let expect: f64 = w.iter().map(|&wl| wl * (1.0 - (-wl * q11 * t).exp())).sum();
        let var: f64 = w
            .iter()
            .map(|&wl| {
                let p = 1.0 - (-wl * q11 * t).exp();
                wl * wl * p * (1.0 - p)
            })
            .sum();
        let band = 3.0 * (var / reps as f64).sqrt();
        let m = mean(&xs);
        assert!((m - expect).abs() <= band, "{m} vs {expect} (band {band})");
    }

    #[test]
    fn bp_bundle_shares_clocks_and_scales() {
        let w = WeightVector::new([0.8, 0.3]);
        let c_n = 1.0 / (w.sigma(2) * w.sigma(2)).sqrt();
        let q12 = c_n + 0.4;
        let s = ModelSpec::new(
            w.clone(),
            w.clone(),
            [[0.7, q12], [q12, 0.9]],
            None,
        )
        .unwrap();
        let rp = bipartite_reparam(&s, None).unwrap();
        let mut rng = replica_rng(23, 0);
        let b = build_exploration_bp(&s, &rp, Some(60.0), &mut rng);
        // X~^{2,1} and the N-part of X~^{1,1} share jump times; size ratio
        // is eps1
        let x21_jumps: Vec<(f64, f64)> = b.x21.jumps().collect();
        let x11_jumps: Vec<(f64, f64)> = b.x11.jumps().collect();
        assert_eq!(x21_jumps.len(), x11_jumps.len());
        for ((ta, sa), (tb, sb)) in x21_jumps.iter().zip(&x11_jumps) {
            assert_eq!(ta, tb);
            assert!((sb / sa - rp.eps[0]).abs() < 1e-12);
        }
        // E[X~^{2,1}(t)] = sum w_l (1 - e^{-w_l q t})
        let reps = 10_000;
        let t = 0.9;
        let xs: Vec<f64> = (0..reps)
            .map(|_| {
                build_exploration_bp(&s, &rp, Some(60.0), &mut rng).x21.eval(t).unwrap()
            })
            .collect();
        let expect: f64 = w
            .entries()
            .iter()
            .map(|&wl| wl * (1.0 - (-wl * rp.q_shared * t).exp()))
            .collect::<Vec<_>>()
            .iter()
            .sum();
        let var: f64 = w
            .entries()
            .iter()
            .map(|&wl| {
                let p = 1.0 - (-wl * rp.q_shared * t).exp();
                wl * wl * p * (1.0 - p)
            })
            .sum();
        let band = 3.0 * (var / reps as f64).sqrt();
        assert!((mean(&xs) - expect).abs() <= band);
    }

    fn random_field(rng: &mut impl Rng, horizon: f64) -> AdditiveField {
        let path = |diag: bool, rng: &mut dyn rand::RngCore| {
            let n = (rng.next_u32() % 6) as usize;
            let jumps: Vec<(f64, f64)> = (0..n)
                .map(|_| {
                    let u = rng.next_u32() as f64 / u32::MAX as f64;
                    let v = rng.next_u32() as f64 / u32::MAX as f64;
                    (u * horizon, 0.1 + 1.5 * v)
                })
                .collect();
            let drift = if diag {
                -(0.3 + (rng.next_u32() as f64 / u32::MAX as f64))
            } else {
                0.0
            };
            JumpDriftPath::new(drift, jumps, horizon)
        };
        let f11 = path(true, rng);
        let f12 = path(false, rng);
        let f21 = path(false, rng);
        let f22 = path(true, rng);
        AdditiveField::new([[f11, f12], [f21, f22]])
    }

    /// Exhaustive oracle for the minimal solution: with pure-jump
    /// off-diagonals, f^{j,i}_- is constant on the intervals between the
    /// other coordinate's jump times, so every solution has t_j among the
    /// level crossings of f^{jj} for finitely many candidate levels.
    fn oracle_min_solution(field: &AdditiveField, r: [f64; 2]) -> [f64; 2] {
        let horizon = field.f[0][0].horizon();
        // candidate plateau boundaries per coordinate: 0, jump times, inf
        let plateau_points = |p: &JumpDriftPath| -> Vec<f64> {
            let mut v = vec![0.0];
            v.extend(p.jumps().map(|(t, _)| t));
            v.push(f64::INFINITY);
            v
        };
        // all level-crossing times of a diagonal path for a given level
        let crossings = |p: &JumpDriftPath, level: f64| -> Vec<f64> {
            let mut out = Vec::new();
            let d = p.drift();
            let target = -level;
            if level < 0.0 {
                out.push(0.0);
                return out;
            }
            let mut t = 0.0;
            let mut val = 0.0;
            if val <= target {
                out.push(0.0);
            }
            for (tj, s) in p.jumps() {
                if d < 0.0 {
                    let v_end = val + d * (tj - t);
                    if val >= target && v_end <= target {
                        out.push(t + (val - target) / -d);
                    }
                    val = v_end;
                }
                val += s;
                t = tj;
            }
            if d < 0.0 {
                let v_end = val + d * (horizon - t);
                if val >= target && v_end <= target {
                    out.push(t + (val - target) / -d);
                }
            }
            out
        };

        let f = &field.f;
        let mut solutions: Vec<[f64; 2]> = vec![[f64::INFINITY, f64::INFINITY]];
        // finite t1, t2 = inf and vice versa
        for t1 in crossings(&f[0][0], r[0] + eval_left_ext(&f[0][1], f64::INFINITY)) {
            solutions.push([t1, f64::INFINITY]);
        }
        for t2 in crossings(&f[1][1], r[1] + eval_left_ext(&f[1][0], f64::INFINITY)) {
            solutions.push([f64::INFINITY, t2]);
        }
        // both finite: t2 ranges over plateaus of f21-evaluations
        for &p2 in &plateau_points(&f[1][0]) {
            let _ = p2;
        }
        // enumerate t2-plateau intervals of f12 (driven by t2) indirectly:
        // pick candidate t2 from crossings of f22 against levels built from
        // f21 plateaus of t1, and conversely; combine and check exactly.
        let mut cand1: Vec<f64> = Vec::new();
        let mut cand2: Vec<f64> = Vec::new();
        for &b2 in &plateau_points(&f[0][1]) {
            let lvl = r[0] + if b2.is_infinite() {
                eval_left_ext(&f[0][1], f64::INFINITY)
            } else {
                f[0][1].eval(b2).unwrap()
            };
            cand1.extend(crossings(&f[0][0], lvl));
            // also left limits at the plateau boundary
            let lvl_left = r[0] + eval_left_ext(&f[0][1], b2);
            cand1.extend(crossings(&f[0][0], lvl_left));
        }
        for &b1 in &plateau_points(&f[1][0]) {
            let lvl = r[1] + if b1.is_infinite() {
                eval_left_ext(&f[1][0], f64::INFINITY)
            } else {
                f[1][0].eval(b1).unwrap()
            };
            cand2.extend(crossings(&f[1][1], lvl));
            let lvl_left = r[1] + eval_left_ext(&f[1][0], b1);
            cand2.extend(crossings(&f[1][1], lvl_left));
        }
        for &t1 in &cand1 {
            for &t2 in &cand2 {
                let ok1 = (eval_left_ext(&f[0][0], t1) + eval_left_ext(&f[0][1], t2)
                    + r[0])
                    .abs()
                    < 1e-9;
                let ok2 = (eval_left_ext(&f[1][0], t1) + eval_left_ext(&f[1][1], t2)
                    + r[1])
                    .abs()
                    < 1e-9;
                if ok1 && ok2 {
                    solutions.push([t1, t2]);
                }
            }
        }
        // minimal = coordinatewise min over solutions (the lemma guarantees
        // it is itself a solution)
        let mut best = [f64::INFINITY, f64::INFINITY];
        for s in &solutions {
            best[0] = best[0].min(s[0]);
            best[1] = best[1].min(s[1]);
        }
        best
    }

    #[test]
    fn decoupled_field_hits_in_one_step() {
        let horizon = 10.0;
        let f11 = JumpDriftPath::new(-1.0, vec![(1.0, 0.5)], horizon);
        let f22 = JumpDriftPath::new(-2.0, vec![], horizon);
        let zero = JumpDriftPath::zero(horizon);
        let field = AdditiveField::new([[f11.clone(), zero.clone()], [zero, f22.clone()]]);
        let (t, trace) = field_hitting_time_trace(&field, [0.7, 1.0]);
        assert_eq!(t[0], tau(&f11, 0.7));
        assert_eq!(t[1], tau(&f22, 1.0));
        assert!(trace.len() <= 3);

        // r = 0 with f(0) = 0: the origin solves it
        let f = AdditiveField::new([
            [JumpDriftPath::new(-1.0, vec![], 10.0), JumpDriftPath::zero(10.0)],
            [JumpDriftPath::zero(10.0), JumpDriftPath::new(-1.0, vec![], 10.0)],
        ]);
        assert_eq!(field_hitting_time(&f, [0.0, 0.0]), [0.0, 0.0]);
    }

    #[test]
    fn hitting_time_matches_oracle_and_shortcut() {
        let mut rng = replica_rng(24, 0);
        let mut infinite_t1 = 0usize;
        for case in 0..200 {
            let field = random_field(&mut rng, 12.0);
            let r1 = 0.05 + 2.0 * rng.random::<f64>();
            let r = [r1, 0.0];
            let (t, trace) = field_hitting_time_trace(&field, r);
            // monotone at every step
            for w in trace.windows(2) {
                assert!(w[1][0] >= w[0][0] && w[1][1] >= w[0][1]);
            }
            // oracle agreement
            let oracle = oracle_min_solution(&field, r);
            for j in 0..2 {
                if oracle[j].is_finite() || t[j].is_finite() {
                    assert!(
                        (t[j] - oracle[j]).abs() <= 1e-9,
                        "case {case} coord {j}: {} vs oracle {}",
                        t[j],
                        oracle[j]
                    );
                }
            }
            // single-process shortcut agreement (exact)
            let (t1, t2) = single_process_t1(&field, r1);
            if t[0].is_finite() {
                assert_eq!(t1, t[0], "case {case}: T1 mismatch");
                assert_eq!(t2, t[1], "case {case}: T2 mismatch");
            } else {
                assert!(t1.is_infinite());
                infinite_t1 += 1;
            }
        }
        // the budget-exceeded sentinel must actually occur in the sample
        assert!(infinite_t1 > 0);
    }

    #[test]
    fn hitting_time_beyond_budget_is_infinite() {
        let horizon = 2.0;
        let f11 = JumpDriftPath::new(-1.0, vec![], horizon);
        let f22 = JumpDriftPath::new(-1.0, vec![], horizon);
        let zero = JumpDriftPath::zero(horizon);
        let field = AdditiveField::new([[f11, zero.clone()], [zero, f22]]);
        // drift budget before the horizon is 2; r = 5 is unreachable
        let t = field_hitting_time(&field, [5.0, 0.0]);
        assert!(t[0].is_infinite());
        let (t1, _) = single_process_t1(&field, 5.0);
        assert!(t1.is_infinite());
    }

    #[test]
    fn v_excursions_within_budget() {
        // per-realization sanity: total excursion length of V is at most
        // the horizon
        let s = spec(&[0.8, 0.6, 0.4], &[0.7, 0.5], [[1.0, 0.8], [0.8, 0.9]]);
        let mut rng = replica_rng(25, 0);
        for _ in 0..50 {
            let b = build_exploration(&s, None, &mut rng).unwrap();
            let e = b.v.extract_excursions();
            assert!(e.total_length() <= b.v.horizon() + 1e-12);
            // V never jumps downwards
            assert!(b.v.jumps().all(|(_, sz)| sz > 0.0));
        }
    }
}
