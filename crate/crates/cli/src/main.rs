//! `rank2sim`: sampling, exploration, limit simulation and experiments for
//! critical rank-2 multiplicative random graphs.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use rank2sim_core::exploration::build_exploration;
use rank2sim_core::graphgen::{components, sample_graph};
use rank2sim_core::harness::{
    convergence_residuals, limit_zeta_top, persist_report, run_regime_experiment,
    slope_diagnostic, write_residuals_csv, write_zeta_csv, ExperimentConfig, ExperimentReport,
};
use rank2sim_core::params::{bip_er_to_rank2, sbm_to_rank2, ClusterRegime, Mat2, ModelSpec};
use rank2sim_core::rng::replica_rng;

#[derive(Parser)]
#[command(name = "rank2sim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads for replica-level parallelism (0 = all cores)
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
}

#[derive(Args)]
struct CommonIo {
    /// Input JSON config file
    #[arg(long)]
    config: PathBuf,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Seed override (takes precedence over RANK2SIM_SEED and the config)
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample one graph from a ModelSpec JSON; writes edges.csv and
    /// components.csv
    SampleGraph(CommonIo),
    /// Build the exploration processes for a ModelSpec JSON; writes path
    /// dumps under paths/ and the V-excursion table
    Explore {
        #[command(flatten)]
        io: CommonIo,
        /// exploration horizon (default: derived from the spec)
        #[arg(long)]
        horizon: Option<f64>,
    },
    /// Simulate limit excursion lengths for an experiment config; writes
    /// zeta.csv
    Limit {
        #[command(flatten)]
        io: CommonIo,
        #[arg(long)]
        replicas: Option<usize>,
        #[arg(long)]
        grid_step: Option<f64>,
        #[arg(long)]
        horizon: Option<f64>,
    },
    /// Convert an SBM or bipartite Erdos-Renyi parametrization into a
    /// ModelSpec JSON
    Convert {
        #[command(subcommand)]
        family: ConvertFamily,
    },
    /// Run a full regime experiment; writes report.json, config.json,
    /// masses.csv and zeta.csv
    Experiment {
        #[command(flatten)]
        io: CommonIo,
        #[arg(long)]
        replicas: Option<usize>,
        #[arg(long)]
        grid_step: Option<f64>,
        #[arg(long)]
        horizon: Option<f64>,
        /// also run the classic-regime slope diagnostic with this many
        /// replicas
        #[arg(long)]
        slope_replicas: Option<usize>,
    },
    /// Finite-n residuals of the asymptotic conditions along the ladder;
    /// writes residuals.csv
    Residuals(CommonIo),
}

#[derive(Subcommand)]
enum ConvertFamily {
    Sbm(CommonIo),
    Biper(CommonIo),
}

#[derive(serde::Deserialize)]
struct SbmInput {
    n1: usize,
    n2: usize,
    k_tilde: Mat2,
    a_tilde: Mat2,
    mu: [f64; 2],
    b: [f64; 2],
}

#[derive(serde::Deserialize)]
struct BiperInput {
    n: usize,
    m: usize,
    lambda12: f64,
    regime: ClusterRegime,
}

fn load_spec(path: &PathBuf) -> Result<ModelSpec> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

fn load_experiment(io: &CommonIo) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(&io.config)
        .with_context(|| format!("reading {}", io.config.display()))?;
    let mut cfg: ExperimentConfig = serde_json::from_str(&text)?;
    cfg.apply_env_seed();
    if let Some(s) = io.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn effective_seed(io: &CommonIo) -> u64 {
    io.seed
        .or_else(|| std::env::var("RANK2SIM_SEED").ok().and_then(|s| s.parse().ok()))
        .unwrap_or(0)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if cli.threads > 0 {
        rank2sim_core::init_thread_pool(cli.threads).map_err(anyhow::Error::msg)?;
    }

    match cli.command {
        Command::SampleGraph(io) => {
            let spec = load_spec(&io.config)?;
            let mut rng = replica_rng(effective_seed(&io), 0);
            let g = sample_graph(&spec, &mut rng);
            fs::create_dir_all(&io.out)?;
            let mut edges = fs::File::create(io.out.join("edges.csv"))?;
            g.dump_edges_csv(&mut edges)?;
            let list = components(&g);
            let mut comps = fs::File::create(io.out.join("components.csv"))?;
            list.dump_csv(&mut comps)?;
            println!(
                "sampled {} edges, {} components -> {}",
                g.edges.len(),
                list.components.len(),
                io.out.display()
            );
        }
        Command::Explore { io, horizon } => {
            let spec = load_spec(&io.config)?;
            let mut rng = replica_rng(effective_seed(&io), 0);
            // specs with a vanishing diagonal rate go through the bipartite
            // reparametrization first
            let b = if spec.q[0][0] == 0.0 || spec.q[1][1] == 0.0 {
                let rp = rank2sim_core::params::bipartite_reparam_default(&spec)?;
                rank2sim_core::exploration::build_exploration_bp(&spec, &rp, horizon, &mut rng)
            } else {
                build_exploration(&spec, horizon, &mut rng)?
            };
            let dir = io.out.join("paths");
            fs::create_dir_all(&dir)?;
            for (name, path) in
                [("v", &b.v), ("x11", &b.x11), ("x22", &b.x22), ("u2x21", &b.u2x21)]
            {
                let mut f = fs::File::create(dir.join(format!("{name}.csv")))?;
                path.dump_csv(&mut f)?;
            }
            let e = b.v.extract_excursions();
            let mut exc = fs::File::create(io.out.join("excursions.csv"))?;
            writeln!(exc, "left,right,length")?;
            for &(l, r) in &e.intervals {
                writeln!(exc, "{},{},{}", l, r, r - l)?;
            }
            println!(
                "explored: {} excursions of V (horizon {}) -> {}",
                e.intervals.len(),
                b.v.horizon(),
                io.out.display()
            );
        }
        Command::Limit { io, replicas, grid_step, horizon } => {
            let mut cfg = load_experiment(&io)?;
            if let Some(r) = replicas {
                cfg.limit_replicas = r;
            }
            if grid_step.is_some() {
                cfg.grid_step = grid_step;
            }
            if horizon.is_some() {
                cfg.horizon = horizon;
            }
            let rp = cfg.regime_params()?;
            let batch = limit_zeta_top(&rp, &cfg, cfg.top_k);
            fs::create_dir_all(&io.out)?;
            let report = ExperimentReport {
                config: cfg.clone(),
                regime_params: rp,
                mass1_coefficient: 1.0,
                rungs: vec![],
                resolved_grid_step: batch.grid_step,
                resolved_horizon: batch.horizon,
                zeta_top: batch.zeta_top,
                passed_fraction: f64::NAN,
                accepted: true,
                failed_rung: None,
                runtime_secs: 0.0,
                inadequate_limit_replicas: batch.inadequate,
            };
            let mut f = fs::File::create(io.out.join("zeta.csv"))?;
            write_zeta_csv(&report, &mut f)?;
            println!(
                "{} limit replicas ({} inadequate horizons) -> {}",
                report.zeta_top.len(),
                report.inadequate_limit_replicas,
                io.out.join("zeta.csv").display()
            );
        }
        Command::Convert { family } => {
            let (io, conv) = match family {
                ConvertFamily::Sbm(io) => {
                    let text = fs::read_to_string(&io.config)?;
                    let input: SbmInput = serde_json::from_str(&text)?;
                    let conv = sbm_to_rank2(
                        input.n1,
                        input.n2,
                        &input.k_tilde,
                        &input.a_tilde,
                        input.mu,
                        input.b,
                    )?;
                    (io, conv)
                }
                ConvertFamily::Biper(io) => {
                    let text = fs::read_to_string(&io.config)?;
                    let input: BiperInput = serde_json::from_str(&text)?;
                    let conv = bip_er_to_rank2(input.n, input.m, input.lambda12, input.regime)?;
                    (io, conv)
                }
            };
            fs::create_dir_all(&io.out)?;
            let path = io.out.join("spec.json");
            fs::write(&path, serde_json::to_string_pretty(&conv.spec)?)?;
            fs::write(io.out.join("limits.json"), serde_json::to_string_pretty(&conv.limits)?)?;
            println!("wrote {}", path.display());
        }
        Command::Experiment { io, replicas, grid_step, horizon, slope_replicas } => {
            let mut cfg = load_experiment(&io)?;
            if let Some(r) = replicas {
                cfg.replicas = r;
            }
            if grid_step.is_some() {
                cfg.grid_step = grid_step;
            }
            if horizon.is_some() {
                cfg.horizon = horizon;
            }
            let report = run_regime_experiment(&cfg)?;
            persist_report(&io.out, &cfg, &report)?;
            if let Some(sr) = slope_replicas {
                let slope = slope_diagnostic(&cfg, sr)?;
                fs::write(io.out.join("slope.json"), serde_json::to_string_pretty(&slope)?)?;
            }
            println!(
                "experiment done in {:.1}s: {:.0}% of comparisons passed -> {}",
                report.runtime_secs,
                100.0 * report.passed_fraction,
                io.out.display()
            );
        }
        Command::Residuals(io) => {
            let cfg = load_experiment(&io)?;
            let rows = convergence_residuals(&cfg)?;
            fs::create_dir_all(&io.out)?;
            let mut f = fs::File::create(io.out.join("residuals.csv"))?;
            write_residuals_csv(&rows, &mut f)?;
            fs::write(io.out.join("residuals.json"), serde_json::to_string_pretty(&rows)?)?;
            println!("wrote {} rung rows -> {}", rows.len(), io.out.display());
        }
    }
    Ok(())
}
