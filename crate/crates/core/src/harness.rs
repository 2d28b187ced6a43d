//! Experiment orchestration: regime experiments comparing finite-n
//! component masses against limit excursion lengths, the slope diagnostic,
//! convergence residuals, and persistence of reports.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exploration::{build_exploration, ExplorationError};
use crate::graphgen::{top_components, ComponentMass, GraphSampler};
use crate::levy::{
    default_horizon, limit_bipartite, limit_classic, limit_interacting, zeta_of_grid, LevyError,
};
use crate::params::{
    bip_er_to_rank2, bipartite_params, classic_params, interacting_params, sbm_to_rank2,
    ClusterRegime, Conversion, LimitTriple, Mat2, ModelSpec, ParamsError, RegimeParams,
    RegimeTag,
};
use crate::parallel::replica_map;
use crate::stats::{ks_two_sample, mean, pearson, slope_through_origin, wasserstein1, StatsError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Params(#[from] ParamsError),
    #[error(transparent)]
    Levy(#[from] LevyError),
    #[error(transparent)]
    Exploration(#[from] ExplorationError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Where the model family comes from. Explicit specs ignore ladder rungs;
/// the conversions rebuild the spec at every rung size.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum ModelSource {
    Explicit { spec: ModelSpec, limits: (LimitTriple, LimitTriple) },
    Sbm { k_tilde: Mat2, a_tilde: Mat2, mu: [f64; 2], b: [f64; 2] },
    BipartiteEr { lambda12: f64, regime: ClusterRegime },
}

/// One ladder rung: per-type sizes (for the bipartite family `n1 = n`,
/// `n2 = m`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rung {
    pub n1: usize,
    pub n2: usize,
}

fn default_replicas() -> usize {
    200
}
fn default_limit_replicas() -> usize {
    2000
}
fn default_top_k() -> usize {
    3
}
fn default_significance() -> f64 {
    0.01
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelSource,
    pub regime: RegimeTag,
    pub n_ladder: Vec<Rung>,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default = "default_limit_replicas")]
    pub limit_replicas: usize,
    /// grid step for limit simulation; default `1e-4 * horizon`
    #[serde(default)]
    pub grid_step: Option<f64>,
    /// horizon for limit simulation; default from the regime scale
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default = "default_significance")]
    pub significance: f64,
    /// least-squares window for the slope diagnostic
    #[serde(default)]
    pub slope_t_max: Option<f64>,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.n_ladder.is_empty() {
            return Err(HarnessError::Config("n_ladder must be non-empty".into()));
        }
        if self.replicas < 1 || self.limit_replicas < 1 || self.top_k < 1 {
            return Err(HarnessError::Config("replicas and top_k must be >= 1".into()));
        }
        Ok(())
    }

    /// Applies the `RANK2SIM_SEED` override when set.
    pub fn apply_env_seed(&mut self) {
        if let Ok(s) = std::env::var("RANK2SIM_SEED") {
            if let Ok(v) = s.parse::<u64>() {
                self.seed = v;
            }
        }
    }

    pub fn resolve(&self, rung: Rung) -> Result<Conversion, HarnessError> {
        Ok(match &self.model {
            ModelSource::Explicit { spec, limits } => {
                Conversion { spec: spec.clone(), limits: limits.clone() }
            }
            ModelSource::Sbm { k_tilde, a_tilde, mu, b } => {
                sbm_to_rank2(rung.n1, rung.n2, k_tilde, a_tilde, *mu, *b)?
            }
            ModelSource::BipartiteEr { lambda12, regime } => {
                bip_er_to_rank2(rung.n1, rung.n2, *lambda12, *regime)?
            }
        })
    }

    /// Regime parameters derived from the decomposition of the first rung.
    pub fn regime_params(&self) -> Result<RegimeParams, HarnessError> {
        let conv = self.resolve(self.n_ladder[0])?;
        let dec = conv.spec.decomposition.as_ref().ok_or_else(|| {
            HarnessError::Config("regime params need a kernel decomposition".into())
        })?;
        let lim = (&conv.limits.0, &conv.limits.1);
        Ok(match self.regime {
            RegimeTag::Classic => classic_params(dec, lim)?,
            RegimeTag::Interacting => interacting_params(dec, lim)?,
            RegimeTag::Bipartite => bipartite_params(dec, lim)?,
        })
    }
}

/// Per-rank two-sample comparison of rescaled masses against limit lengths.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankStat {
    pub rank: usize,
    pub ks_stat: f64,
    pub ks_p: f64,
    pub wasserstein1: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RatioStat {
    pub mean: f64,
    pub sd: f64,
    pub predicted: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RungReport {
    pub rung: Rung,
    pub rank_stats: Vec<RankStat>,
    /// mass ratio M2/M1 of the largest component vs the regime prediction
    /// (classic and bipartite regimes)
    pub ratio: Option<RatioStat>,
    /// correlation of the largest component's two masses across replicas
    pub correlation_top1: f64,
    pub conservation_max_rel_err: f64,
    pub mean_components: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub regime_params: RegimeParams,
    /// coefficient applied to limit lengths before comparison with type-1
    /// masses (u1 in the classic regime, 1 otherwise)
    pub mass1_coefficient: f64,
    pub rungs: Vec<RungReport>,
    /// grid settings actually used for the limit side (defaults expanded)
    pub resolved_grid_step: f64,
    pub resolved_horizon: f64,
    /// limit excursion lengths, `limit_replicas x top_k`
    pub zeta_top: Vec<Vec<f64>>,
    /// fraction of (rung, rank) comparisons passing the significance floor
    pub passed_fraction: f64,
    /// overall acceptance: at least 80% of comparisons passed
    pub accepted: bool,
    /// set when a rung failed mid-run; earlier rungs are still reported
    pub failed_rung: Option<(usize, String)>,
    pub runtime_secs: f64,
    /// count of limit replicas whose horizon-adequacy flag tripped even
    /// after doubling
    pub inadequate_limit_replicas: usize,
}

/// Per-replica graph summary retained for the report and masses.csv.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphReplicaSummary {
    pub top: Vec<[f64; 2]>,
    pub conservation_rel_err: f64,
    pub n_components: usize,
}

fn graph_rung(
    spec: &ModelSpec,
    replicas: usize,
    top_k: usize,
    seed: u64,
    rung_index: u64,
) -> Vec<GraphReplicaSummary> {
    let sampler = GraphSampler::new(spec);
    let sig1 = spec.w1.sigma(1);
    let sig2 = spec.w2.sigma(1);
    replica_map(seed, rung_index << 32, replicas, |_, mut rng| {
        let g = sampler.sample(&mut rng);
        let tc = top_components(&g, top_k);
        let mut masses: Vec<[f64; 2]> = tc.top.iter().map(|c: &ComponentMass| c.mass).collect();
        masses.resize(top_k, [0.0; 2]);
        // independent recomputation of the totals from the component walk
        // is what `top_components` returns; compare against sigma1
        let e1 = (tc.totals[0] - sig1).abs() / sig1.max(1e-300);
        let e2 = (tc.totals[1] - sig2).abs() / sig2.max(1e-300);
        GraphReplicaSummary {
            top: masses,
            conservation_rel_err: e1.max(e2),
            n_components: tc.n_components,
        }
    })
}

/// Limit-simulation batch: top-k excursion lengths per draw plus the grid
/// settings actually used (the resolved defaults).
#[derive(Debug, Clone)]
pub struct LimitBatch {
    pub zeta_top: Vec<Vec<f64>>,
    pub inadequate: usize,
    pub grid_step: f64,
    pub horizon: f64,
}

/// Simulates `limit_replicas` draws of the regime limit.
pub fn limit_zeta_top(
    rp: &RegimeParams,
    cfg: &ExperimentConfig,
    top_k: usize,
) -> LimitBatch {
    let triple = match rp {
        RegimeParams::Classic(cp) => cp.triple.clone(),
        RegimeParams::Bipartite(bp) => bp.triple.clone(),
        RegimeParams::Interacting(ip) => ip.z1.clone(), // scale source only
    };
    let horizon = cfg.horizon.unwrap_or_else(|| default_horizon(&triple));
    let step = cfg.grid_step.unwrap_or(1e-4 * horizon);
    let seed = cfg.seed;
    let results = replica_map(seed, 1 << 40, cfg.limit_replicas, |_, mut rng| {
        let (mut lengths, adequate) = match rp {
            RegimeParams::Classic(_) => {
                let mut t = horizon;
                let mut out = None;
                for _ in 0..4 {
                    let s = limit_classic(rp, step, t, &mut rng).unwrap();
                    let z = zeta_of_grid(&s.path);
                    if z.adequate {
                        out = Some((z.lengths, true));
                        break;
                    }
                    t *= 2.0;
                    out = Some((z.lengths, false));
                }
                out.unwrap()
            }
            RegimeParams::Bipartite(_) => {
                let mut t = horizon;
                let mut out = None;
                for _ in 0..4 {
                    let s = limit_bipartite(rp, step, t, &mut rng).unwrap();
                    let z = zeta_of_grid(&s.path);
                    if z.adequate {
                        out = Some((z.lengths, true));
                        break;
                    }
                    t *= 2.0;
                    out = Some((z.lengths, false));
                }
                out.unwrap()
            }
            RegimeParams::Interacting(_) => {
                let mut t = horizon;
                let mut out = None;
                for _ in 0..4 {
                    let s = limit_interacting(rp, step, t, &mut rng).unwrap();
                    let z = zeta_of_grid(&s.path);
                    if z.adequate && s.depth_ok {
                        out = Some((z.lengths, true));
                        break;
                    }
                    t *= 2.0;
                    out = Some((z.lengths, false));
                }
                out.unwrap()
            }
        };
        lengths.resize(top_k.max(lengths.len()), 0.0);
        lengths.truncate(top_k);
        (lengths, adequate)
    });
    let inadequate = results.iter().filter(|(_, a)| !a).count();
    LimitBatch {
        zeta_top: results.into_iter().map(|(l, _)| l).collect(),
        inadequate,
        grid_step: step,
        horizon,
    }
}

/// Runs the full experiment: per rung, sampled component masses vs the
/// rescaled limit excursion lengths, with per-rank KS and Wasserstein
/// statistics, the mass-ratio check, and conservation diagnostics.
pub fn run_regime_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    cfg.validate()?;
    let t0 = Instant::now();
    let rp = cfg.regime_params()?;

    let (mass1_coeff, ratio_pred) = match &rp {
        RegimeParams::Classic(cp) => (cp.u[0], Some(cp.u[1] / cp.u[0])),
        RegimeParams::Bipartite(_) => (1.0, Some(1.0)),
        RegimeParams::Interacting(_) => (1.0, None),
    };

    let batch = limit_zeta_top(&rp, cfg, cfg.top_k);

    let mut rungs = Vec::new();
    let mut passes = 0usize;
    let mut totals = 0usize;
    let mut failed_rung = None;
    for (ri, &rung) in cfg.n_ladder.iter().enumerate() {
        // keep the completed rungs when a later rung cannot be resolved
        let conv = match cfg.resolve(rung) {
            Ok(c) => c,
            Err(e) => {
                failed_rung = Some((ri, e.to_string()));
                break;
            }
        };
        let graphs = graph_rung(&conv.spec, cfg.replicas, cfg.top_k, cfg.seed, ri as u64);

        let mut rank_stats = Vec::new();
        for rank in 0..cfg.top_k {
            let a: Vec<f64> = graphs.iter().map(|g| g.top[rank][0]).collect();
            let b: Vec<f64> = batch.zeta_top.iter().map(|z| mass1_coeff * z[rank]).collect();
            let (ks_stat, ks_p) = ks_two_sample(&a, &b)?;
            let w1 = wasserstein1(&a, &b)?;
            let pass = ks_p > cfg.significance;
            passes += usize::from(pass);
            totals += 1;
            rank_stats.push(RankStat { rank: rank + 1, ks_stat, ks_p, wasserstein1: w1, pass });
        }

        let ratios: Vec<f64> = graphs
            .iter()
            .filter(|g| g.top[0][0] > 0.0)
            .map(|g| g.top[0][1] / g.top[0][0])
            .collect();
        let ratio = ratio_pred.map(|predicted| {
            let m = mean(&ratios);
            let sd = if ratios.len() > 1 {
                crate::stats::variance(&ratios).sqrt()
            } else {
                0.0
            };
            RatioStat { mean: m, sd, predicted }
        });

        let m1: Vec<f64> = graphs.iter().map(|g| g.top[0][0]).collect();
        let m2: Vec<f64> = graphs.iter().map(|g| g.top[0][1]).collect();
        let correlation_top1 = pearson(&m1, &m2);
        let conservation_max_rel_err = graphs
            .iter()
            .map(|g| g.conservation_rel_err)
            .fold(0.0f64, f64::max);
        let mean_components =
            graphs.iter().map(|g| g.n_components as f64).sum::<f64>() / graphs.len() as f64;

        rungs.push(RungReport {
            rung,
            rank_stats,
            ratio,
            correlation_top1,
            conservation_max_rel_err,
            mean_components,
        });
    }

    Ok(ExperimentReport {
        config: cfg.clone(),
        regime_params: rp,
        mass1_coefficient: mass1_coeff,
        rungs,
        resolved_grid_step: batch.grid_step,
        resolved_horizon: batch.horizon,
        zeta_top: batch.zeta_top,
        passed_fraction: passes as f64 / totals.max(1) as f64,
        accepted: failed_rung.is_none() && totals > 0 && passes * 5 >= totals * 4,
        failed_rung,
        runtime_secs: t0.elapsed().as_secs_f64(),
        inadequate_limit_replicas: batch.inadequate,
    })
}

/// Per-replica masses for masses.csv (`rung,replica,rank,mass1,mass2`).
pub fn write_masses_csv(
    cfg: &ExperimentConfig,
    out: &mut impl Write,
) -> Result<(), HarnessError> {
    writeln!(out, "rung,replica,rank,mass1,mass2")?;
    for (ri, &rung) in cfg.n_ladder.iter().enumerate() {
        let conv = cfg.resolve(rung)?;
        let graphs = graph_rung(&conv.spec, cfg.replicas, cfg.top_k, cfg.seed, ri as u64);
        for (rep, g) in graphs.iter().enumerate() {
            for (rank, m) in g.top.iter().enumerate() {
                writeln!(out, "{},{},{},{},{}", ri, rep, rank + 1, m[0], m[1])?;
            }
        }
    }
    Ok(())
}

/// Limit lengths for zeta.csv (`replica,rank,length`).
pub fn write_zeta_csv(report: &ExperimentReport, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "replica,rank,length")?;
    for (rep, z) in report.zeta_top.iter().enumerate() {
        for (rank, len) in z.iter().enumerate() {
            writeln!(out, "{},{},{}", rep, rank + 1, len)?;
        }
    }
    Ok(())
}

/// Writes report.json, the resolved config, masses.csv and zeta.csv.
pub fn persist_report(
    dir: &Path,
    cfg: &ExperimentConfig,
    report: &ExperimentReport,
) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(report).unwrap())?;
    std::fs::write(dir.join("config.json"), serde_json::to_string_pretty(cfg).unwrap())?;
    let mut masses = std::fs::File::create(dir.join("masses.csv"))?;
    write_masses_csv(cfg, &mut masses)?;
    let mut zeta = std::fs::File::create(dir.join("zeta.csv"))?;
    write_zeta_csv(report, &mut zeta)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlopeReport {
    pub predicted: f64,
    pub mean: f64,
    pub sd: f64,
    pub slopes: Vec<f64>,
    pub t_max: f64,
}

/// Classic-regime slope diagnostic: per replica, the least-squares slope of
/// `U^2 o X^{2,1}` over `[0, t_max]` against the kernel prediction
/// `k11 k12 / (k22 (1 - k22))`.
pub fn slope_diagnostic(cfg: &ExperimentConfig, replicas: usize) -> Result<SlopeReport, HarnessError> {
    if cfg.regime != RegimeTag::Classic {
        return Err(HarnessError::Config("slope diagnostic needs the classic regime".into()));
    }
    let rung = *cfg.n_ladder.last().unwrap();
    let conv = cfg.resolve(rung)?;
    let dec = conv
        .spec
        .decomposition
        .as_ref()
        .ok_or_else(|| HarnessError::Config("slope diagnostic needs a decomposition".into()))?;
    let k = dec.k;
    let predicted = k[0][0] * k[0][1] / (k[1][1] * (1.0 - k[1][1]));
    let t_max = cfg.slope_t_max.unwrap_or(1.0);
    let spec = conv.spec.clone();
    let slopes: Vec<f64> = replica_map(cfg.seed, 2 << 40, replicas, |_, mut rng| {
        let b = build_exploration(&spec, Some(4.0 * t_max), &mut rng).unwrap();
        let n_pts = 256;
        let ts: Vec<f64> = (1..=n_pts).map(|i| t_max * i as f64 / n_pts as f64).collect();
        let ys: Vec<f64> = ts.iter().map(|&t| b.u2x21.eval(t).unwrap()).collect();
        slope_through_origin(&ts, &ys)
    });
    let m = mean(&slopes);
    let sd = crate::stats::variance(&slopes).sqrt();
    Ok(SlopeReport { predicted, mean: m, sd, slopes, t_max })
}

/// Finite-n residuals of the four asymptotic conditions, per rung.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidualRow {
    pub rung: Rung,
    pub sigma2: [f64; 2],
    /// `sigma3 / sigma2^3` per type (tends to `beta_i + sum theta_i^3`)
    pub third_moment_ratio: [f64; 2],
    /// the three largest weights over sigma2, per type (tend to theta_i)
    pub top_weights_over_sigma2: [Vec<f64>; 2],
    /// `q_ij sqrt(sigma2_i sigma2_j) - k_ij` (tends to 0 at rate 1/c_n)
    pub kernel_residual: Option<Mat2>,
}

pub fn convergence_residuals(cfg: &ExperimentConfig) -> Result<Vec<ResidualRow>, HarnessError> {
    if cfg.n_ladder.len() < 2 {
        return Err(HarnessError::Config("residuals need at least 2 rungs".into()));
    }
    let mut rows = Vec::new();
    for &rung in &cfg.n_ladder {
        let conv = cfg.resolve(rung)?;
        let spec = &conv.spec;
        let s2 = [spec.w1.sigma(2), spec.w2.sigma(2)];
        let ratio = [
            spec.w1.sigma(3) / s2[0].powi(3),
            spec.w2.sigma(3) / s2[1].powi(3),
        ];
        let tops = |w: &crate::params::WeightVector, s2: f64| -> Vec<f64> {
            w.entries().iter().take(3).map(|x| x / s2).collect()
        };
        let kernel_residual = spec.decomposition.as_ref().map(|dec| {
            let mut r = [[0.0; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    r[i][j] = spec.q[i][j] * (s2[i] * s2[j]).sqrt() - dec.k[i][j];
                }
            }
            r
        });
        rows.push(ResidualRow {
            rung,
            sigma2: s2,
            third_moment_ratio: ratio,
            top_weights_over_sigma2: [tops(&spec.w1, s2[0]), tops(&spec.w2, s2[1])],
            kernel_residual,
        });
    }
    Ok(rows)
}

pub fn write_residuals_csv(rows: &[ResidualRow], out: &mut impl Write) -> std::io::Result<()> {
    writeln!(
        out,
        "n1,n2,sigma2_1,sigma2_2,third_ratio_1,third_ratio_2,kres_11,kres_12,kres_22"
    )?;
    for r in rows {
        let k = r.kernel_residual.unwrap_or([[f64::NAN; 2]; 2]);
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.rung.n1,
            r.rung.n2,
            r.sigma2[0],
            r.sigma2[1],
            r.third_moment_ratio[0],
            r.third_moment_ratio[1],
            k[0][0],
            k[0][1],
            k[1][1]
        )?;
    }
    Ok(())
}
