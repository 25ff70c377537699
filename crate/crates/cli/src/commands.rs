//! Subcommand implementations, independent of argument parsing.

use std::fmt;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mipbo::benchmarks::gp_prior_sample;
use mipbo::bo::{beta_schedule, exact_lcb, minimize_lcb, run, BoConfig, BoTrace, GroupProposal};
use mipbo::exec::{with_workers, Execution};
use mipbo::gp::{Dataset, GpModel, KernelParams};
use mipbo::io::{read_dataset_csv, summarize, write_summary_csv, write_timings_csv, write_trace_csv, SummaryRow};
use mipbo::model::{build_full_model, build_sub_model, export_lp_text};
use mipbo::nelder_mead::{nelder_mead, NelderMeadConfig};
use mipbo::pwl::{ApproxErrorReport, PwlKernel};
use mipbo::Bounds;

use crate::config::ExperimentConfig;

pub const CONFIG_FILE: &str = "config.toml";
pub const SUMMARY_FILE: &str = "summary.csv";

pub fn trace_file(seed: u64) -> String {
    format!("trace_seed{seed}.csv")
}

pub fn timings_file(seed: u64) -> String {
    format!("timings_seed{seed}.csv")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

#[derive(Debug)]
pub struct RunOutput {
    pub seeds: Vec<u64>,
    pub traces: Vec<BoTrace>,
    pub summary: Vec<SummaryRow>,
}

/// Runs every replication of `cfg` and writes the run directory: the
/// resolved configuration, one trace and one timings file per seed, and the
/// regret summary.
pub fn bo_run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunOutput> {
    cfg.validate()?;
    let bench = mipbo::benchmarks::get(&cfg.experiment.benchmark)?;
    let problem = bench.problem();
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    std::fs::write(out_dir.join(CONFIG_FILE), cfg.resolved().to_toml()?)?;

    let seeds: Vec<u64> = (0..cfg.experiment.replications as u64).map(|k| cfg.experiment.seed + k).collect();
    let workers = cfg.experiment.workers;
    let exec = if workers > 1 { Execution::Parallel } else { Execution::Sequential };
    let results = with_workers(workers, || {
        exec.map(&seeds, |&seed| {
            log::info!("{}: replication with seed {seed} started", bench.name);
            let trace = run(&problem, &cfg.bo_config(seed));
            if let Ok(t) = &trace {
                log::info!("{}: seed {seed} finished, best {}", bench.name, t.best());
            }
            trace
        })
    });
    let mut traces = Vec::with_capacity(seeds.len());
    for (seed, trace) in seeds.iter().zip(results) {
        let trace = trace.with_context(|| format!("replication with seed {seed}"))?;
        if let Some(why) = &trace.aborted {
            log::warn!("seed {seed} stopped early: {why}");
        }
        write_trace_csv(&trace, create(&out_dir.join(trace_file(*seed)))?)?;
        write_timings_csv(&trace, create(&out_dir.join(timings_file(*seed)))?)?;
        traces.push(trace);
    }
    let summary = summarize(&traces);
    write_summary_csv(&summary, create(&out_dir.join(SUMMARY_FILE))?)?;
    Ok(RunOutput { seeds, traces, summary })
}

/// Where the acquisition instance comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum InstanceSource {
    /// `n` points in the unit cube with targets drawn from the GP prior.
    Prior { dim: usize, n: usize, seed: u64 },
    /// A dataset file with inputs in the unit cube.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcqSpec {
    pub source: InstanceSource,
    pub params: KernelParams,
    /// `None` uses the default schedule at `t = N`.
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcqReport {
    pub dim: usize,
    pub n: usize,
    pub beta: f64,
    pub miqp_x: Vec<f64>,
    /// Exact LCB of the best point the MIQP search returned.
    pub miqp_lcb: f64,
    /// Exact LCB after the gradient polish.
    pub polished_lcb: f64,
    pub group: GroupProposal,
    pub nm_x: Vec<f64>,
    pub nm_lcb: f64,
    pub nm_evaluations: usize,
}

impl fmt::Display for AcqReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let g = &self.group;
        writeln!(f, "instance dim={} n={} beta={:?}", self.dim, self.n, self.beta)?;
        writeln!(
            f,
            "miqp lcb={:?} polished_lcb={:?} status={} gap={:?} nodes={} x={:?}",
            self.miqp_lcb,
            self.polished_lcb,
            g.status.map_or("none", |s| s.as_str()),
            g.gap,
            g.nodes,
            self.miqp_x
        )?;
        writeln!(f, "nelder_mead lcb={:?} evaluations={} x={:?}", self.nm_lcb, self.nm_evaluations, self.nm_x)?;
        let winner = if self.miqp_lcb <= self.nm_lcb { "miqp" } else { "nelder_mead" };
        write!(f, "lower={winner} difference={:?}", self.nm_lcb - self.miqp_lcb)
    }
}

pub fn load_instance(spec: &AcqSpec) -> Result<Dataset> {
    match &spec.source {
        InstanceSource::Prior { dim, n, seed } => Ok(gp_prior_sample(*dim, *n, &spec.params, *seed)?),
        InstanceSource::File(path) => {
            let ds = read_dataset_csv(File::open(path).with_context(|| format!("opening {}", path.display()))?)?;
            if !ds.x().iter().all(|x| Bounds::unit(ds.dim()).contains(x, 0.0)) {
                bail!("{}: inputs must lie in the unit cube", path.display());
            }
            Ok(ds)
        }
    }
}

/// Minimizes the exact LCB of one instance with the MIQP pipeline and with
/// Nelder-Mead started at the origin.
pub fn solve_acq(spec: &AcqSpec, bo: &BoConfig) -> Result<AcqReport> {
    let ds = load_instance(spec)?;
    let (dim, n) = (ds.dim(), ds.len());
    let beta = match spec.beta {
        Some(b) if b >= 0.0 => b,
        Some(b) => bail!("beta must be non-negative, got {b}"),
        None => beta_schedule(n, dim)?,
    };
    let gp = GpModel::new(ds, spec.params)?;
    let (miqp_x, group) = minimize_lcb(&gp, beta, &[], bo, bo.seed)?;
    let bounds = Bounds::unit(dim);
    let nm = nelder_mead(|x| exact_lcb(&gp, x, beta), &bounds, &NelderMeadConfig::default());
    Ok(AcqReport {
        dim,
        n,
        beta,
        miqp_x,
        miqp_lcb: group.lcb_pool,
        polished_lcb: group.lcb_polished,
        group,
        nm_lcb: exact_lcb(&gp, &nm.x, beta),
        nm_x: nm.x,
        nm_evaluations: nm.evaluations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExportSpec {
    pub dataset: PathBuf,
    pub params: KernelParams,
    pub beta: f64,
    /// Defaults to the unit cube.
    pub bounds: Option<Bounds>,
    /// Mean-only model.
    pub sub: bool,
}

/// LP text of the acquisition model for a dataset and fixed kernel.
pub fn export_model(spec: &ExportSpec) -> Result<String> {
    let file = File::open(&spec.dataset).with_context(|| format!("opening {}", spec.dataset.display()))?;
    let ds = read_dataset_csv(file)?;
    let bounds = spec.bounds.clone().unwrap_or_else(|| Bounds::unit(ds.dim()));
    if bounds.dim() != ds.dim() {
        bail!("bounds have {} dimensions, the dataset {}", bounds.dim(), ds.dim());
    }
    let pwl = PwlKernel::build(spec.params, &bounds)?;
    let model = if spec.sub {
        build_sub_model(&pwl, &ds, &bounds, &[])?
    } else {
        build_full_model(&pwl, &ds, spec.beta, &bounds, &[])?
    };
    Ok(export_lp_text(&model))
}

pub const KNOTS_FILE: &str = "knots.csv";
pub const ERRORS_FILE: &str = "errors.csv";

/// Builds the piecewise-linear kernel and measures its error with
/// `samples` points per segment.
pub fn linearize(params: KernelParams, bounds: &Bounds, samples: usize) -> Result<(PwlKernel, ApproxErrorReport)> {
    let pwl = PwlKernel::build(params, bounds)?;
    let report = pwl.max_error(samples);
    Ok((pwl, report))
}

/// Writes the knot table and the per-segment error report into `out_dir`.
pub fn write_linearization(pwl: &PwlKernel, report: &ApproxErrorReport, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    pwl.write_knots(create(&out_dir.join(KNOTS_FILE))?)?;
    let mut w = csv::Writer::from_writer(create(&out_dir.join(ERRORS_FILE))?);
    w.write_record(["segment", "r_lo", "r_hi", "max_error", "eps_m"])?;
    let knots = pwl.knots();
    for (j, e) in report.per_segment.iter().enumerate() {
        w.write_record([
            j.to_string(),
            format!("{:?}", knots[j]),
            format!("{:?}", knots[j + 1]),
            format!("{e:?}"),
            format!("{:?}", report.eps_m),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a comma-separated list of numbers.
pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',').map(|v| v.trim().parse().with_context(|| format!("bad number '{v}' in '{s}'"))).collect()
}

/// Box from optional `--lower`/`--upper` lists; both or neither.
pub fn parse_bounds(lower: Option<&str>, upper: Option<&str>) -> Result<Option<Bounds>> {
    match (lower, upper) {
        (None, None) => Ok(None),
        (Some(l), Some(u)) => Ok(Some(Bounds::new(parse_list(l)?, parse_list(u)?)?)),
        _ => bail!("--lower and --upper must be given together"),
    }
}
