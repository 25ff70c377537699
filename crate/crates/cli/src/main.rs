use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use mipbo::bo::BoConfig;
use mipbo::gp::KernelParams;
use mipbo::Bounds;
use mipbo_cli::commands::{self, AcqSpec, ExportSpec, InstanceSource};
use mipbo_cli::config::{parse_groups, ExperimentConfig, ENV_SUB_TIME_LIMIT, ENV_TIME_LIMIT};

#[derive(Parser)]
#[command(name = "mipbo", version, about = "Bayesian optimization with a global MIQP acquisition solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run BO replications on a benchmark and write traces and a regret summary.
    BoRun(BoRunArgs),
    /// Minimize the LCB of one instance with the MIQP pipeline and with Nelder-Mead.
    SolveAcq(SolveAcqArgs),
    /// Write the acquisition model of a dataset in LP format.
    ExportModel(ExportArgs),
    /// Write the piecewise-linear kernel knots and their error report.
    Linearize(LinearizeArgs),
}

/// Flags override the configuration file; the time-limit environment
/// variables override both.
#[derive(Args)]
struct BoRunArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    benchmark: Option<String>,
    #[arg(long)]
    replications: Option<usize>,
    /// BO iterations after the initial design.
    #[arg(long)]
    budget: Option<usize>,
    /// Seed of the first replication; replication k uses seed + k.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    init_samples: Option<usize>,
    #[arg(long)]
    mip_gap: Option<f64>,
    /// Seconds per full-model search.
    #[arg(long)]
    time_limit: Option<f64>,
    /// Node cap per full-model search.
    #[arg(long)]
    node_limit: Option<usize>,
    #[arg(long)]
    pool_size: Option<usize>,
    /// Additive groups such as `0,1;2`.
    #[arg(long)]
    addgp_groups: Option<String>,
    #[arg(long)]
    no_warm_start: bool,
    /// Threads running replications concurrently.
    #[arg(long)]
    workers: Option<usize>,
    /// Run directory.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SolveAcqArgs {
    /// Dataset CSV with inputs in the unit cube; a prior sample is drawn otherwise.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    dim: usize,
    #[arg(long, default_value_t = 5)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    variance: f64,
    #[arg(long, default_value_t = 0.2)]
    lengthscale: f64,
    /// Defaults to the BO schedule at t = N.
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    mip_gap: Option<f64>,
    #[arg(long, env = ENV_TIME_LIMIT)]
    time_limit: Option<f64>,
    #[arg(long)]
    node_limit: Option<usize>,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    variance: f64,
    #[arg(long)]
    lengthscale: f64,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// Comma-separated lower corner; defaults to the unit cube.
    #[arg(long)]
    lower: Option<String>,
    #[arg(long)]
    upper: Option<String>,
    /// Mean-only model.
    #[arg(long)]
    sub: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LinearizeArgs {
    #[arg(long)]
    variance: f64,
    #[arg(long)]
    lengthscale: f64,
    #[arg(long)]
    dim: usize,
    #[arg(long)]
    lower: Option<String>,
    #[arg(long)]
    upper: Option<String>,
    /// Error samples per segment.
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long)]
    out_dir: PathBuf,
}

fn experiment_config(a: &BoRunArgs) -> Result<ExperimentConfig> {
    let mut c = match &a.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(v) = &a.benchmark {
        c.experiment.benchmark = v.clone();
    }
    if let Some(v) = a.replications {
        c.experiment.replications = v;
    }
    if let Some(v) = a.seed {
        c.experiment.seed = v;
    }
    if let Some(v) = a.workers {
        c.experiment.workers = v;
    }
    if let Some(v) = a.budget {
        c.bo.budget = v;
    }
    if a.init_samples.is_some() {
        c.bo.init_samples = a.init_samples;
    }
    if let Some(v) = a.pool_size {
        c.bo.pool_size = v;
    }
    if let Some(g) = &a.addgp_groups {
        c.bo.addgp_groups = Some(parse_groups(g)?);
    }
    if a.no_warm_start {
        c.bo.warm_start = false;
    }
    if a.mip_gap.is_some() {
        c.solver.mip_gap = a.mip_gap;
    }
    if a.time_limit.is_some() {
        c.solver.time_limit = a.time_limit;
    }
    if a.node_limit.is_some() {
        c.solver.node_limit = a.node_limit;
    }
    c.apply_env()?;
    Ok(c)
}

fn kernel(variance: f64, lengthscale: f64) -> KernelParams {
    KernelParams::new(variance, lengthscale)
}

fn bounds(lower: &Option<String>, upper: &Option<String>) -> Result<Option<Bounds>> {
    commands::parse_bounds(lower.as_deref(), upper.as_deref())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::BoRun(a) => {
            let cfg = experiment_config(&a)?;
            let out = commands::bo_run(&cfg, &a.out_dir)?;
            if let Some(last) = out.summary.last() {
                println!(
                    "{} replications, iteration {}: mean regret {:?} (std {:?})",
                    out.seeds.len(),
                    last.iteration,
                    last.mean,
                    last.std
                );
            }
            println!("wrote {}", a.out_dir.display());
        }
        Command::SolveAcq(a) => {
            let source = match a.dataset {
                Some(p) => InstanceSource::File(p),
                None => InstanceSource::Prior { dim: a.dim, n: a.n, seed: a.seed },
            };
            let spec = AcqSpec { source, params: kernel(a.variance, a.lengthscale), beta: a.beta };
            let mut bo = BoConfig { seed: a.seed, ..BoConfig::default() };
            bo.solver.mip_gap = a.mip_gap.unwrap_or(bo.solver.mip_gap);
            bo.solver.time_limit_s = a.time_limit.unwrap_or(bo.solver.time_limit_s);
            bo.solver.node_limit = a.node_limit.unwrap_or(bo.solver.node_limit);
            if let Ok(v) = std::env::var(ENV_SUB_TIME_LIMIT) {
                bo.warm_solver.time_limit_s = v.trim().parse().with_context(|| format!("{ENV_SUB_TIME_LIMIT}={v}"))?;
            }
            println!("{}", commands::solve_acq(&spec, &bo)?);
        }
        Command::ExportModel(a) => {
            let spec = ExportSpec {
                dataset: a.dataset,
                params: kernel(a.variance, a.lengthscale),
                beta: a.beta,
                bounds: bounds(&a.lower, &a.upper)?,
                sub: a.sub,
            };
            let text = commands::export_model(&spec)?;
            std::fs::write(&a.out, text).with_context(|| format!("writing {}", a.out.display()))?;
            println!("wrote {}", a.out.display());
        }
        Command::Linearize(a) => {
            let b = bounds(&a.lower, &a.upper)?.unwrap_or_else(|| Bounds::unit(a.dim));
            anyhow::ensure!(b.dim() == a.dim, "bounds have {} dimensions, --dim is {}", b.dim(), a.dim);
            let (pwl, report) = commands::linearize(kernel(a.variance, a.lengthscale), &b, a.samples)?;
            commands::write_linearization(&pwl, &report, &a.out_dir)?;
            println!("{} knots, eps_m {:?}", pwl.knots().len(), report.eps_m);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
