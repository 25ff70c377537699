//! Bayesian optimization with a globally optimized acquisition: fit, linearize,
//! warm start, branch and bound, select on the exact LCB, polish, evaluate.

mod lhs;
mod polish;

use std::sync::Arc;
use std::time::Instant;

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bounds::Bounds;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::gp::{
    fit_hyperparameters_with, standardize, validate_groups, AdditiveGp, Dataset, FitOptions, GpModel, KernelParams,
};
use crate::linalg::distance;
use crate::model::{known_violation, Candidate, KnownConstraint, MiqpModel};
use crate::pwl::{build_breakpoints_with, ApproxPosterior, PwlKernel, SegmentPlan};
use crate::solver::{solve, SolveStatus, SolverConfig};

pub use lhs::{latin_hypercube, sample_feasible, REJECTION_ATTEMPTS};
pub use polish::{exact_lcb, polish, polish_with, FD_STEP};

/// Distance under which a proposal counts as a repeat of an existing sample.
pub const DUPLICATE_DISTANCE: f64 = 1e-6;
/// Extra diagonal terms, relative to the prior variance, tried in turn when
/// the approximated Gram matrix stays indefinite after the jitter ladder.
pub const APPROX_NUGGETS: [f64; 4] = [0.0, 1e-3, 1e-2, 1e-1];

/// `mean - sqrt(beta) * std`.
pub fn lcb(mean: f64, std: f64, beta: f64) -> f64 {
    mean - beta.max(0.0).sqrt() * std.max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaSchedule {
    /// `coef * D * ln(2t)`.
    Empirical { coef: f64 },
    /// The high-probability regret schedule with confidence `delta` and
    /// Lipschitz-tail constants `a`, `b`, box radius `r`.
    Theorem { delta: f64, a: f64, b: f64, r: f64 },
}

impl Default for BetaSchedule {
    fn default() -> Self {
        BetaSchedule::Empirical { coef: 0.2 }
    }
}

impl BetaSchedule {
    pub fn value(&self, t: usize, dim: usize) -> Result<f64> {
        if t == 0 {
            return Err(Error::InvalidInput("the beta schedule starts at t = 1".into()));
        }
        let (t, d) = (t as f64, dim as f64);
        Ok(match *self {
            BetaSchedule::Empirical { coef } => coef * d * (2.0 * t).ln(),
            BetaSchedule::Theorem { delta, a, b, r } => {
                let pi2 = std::f64::consts::PI.powi(2);
                let inner = (4.0 * d * a / delta).ln().max(0.0).sqrt();
                2.0 * (2.0 * t * t * pi2 / (3.0 * delta)).ln() + 2.0 * d * (t * t * d * b * r * inner).ln()
            }
        })
    }
}

/// `0.2 * D * ln(2t)`.
pub fn beta_schedule(t: usize, dim: usize) -> Result<f64> {
    BetaSchedule::default().value(t, dim)
}

/// Black-box objective in original units; `Err` aborts the run.
pub type Objective = Arc<dyn Fn(&[f64]) -> std::result::Result<f64, String> + Send + Sync>;

#[derive(Clone)]
pub struct Problem {
    pub objective: Objective,
    pub bounds: Bounds,
    /// Constraints in original units.
    pub known: Vec<KnownConstraint>,
    pub known_optimum: Option<f64>,
}

impl std::fmt::Debug for Problem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Problem")
            .field("bounds", &self.bounds)
            .field("known", &self.known)
            .field("known_optimum", &self.known_optimum)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoConfig {
    pub max_iterations: usize,
    /// Size of the initial design; `None` means `min(10 D, 30)`.
    pub init_samples: Option<usize>,
    /// Size of both the mean-only pool and the random pool.
    pub pool_size: usize,
    pub beta: BetaSchedule,
    pub polish_steps: usize,
    /// Initial step of the polish line search, in unit-box coordinates.
    pub polish_step_size: f64,
    pub addgp_groups: Option<Vec<Vec<usize>>>,
    /// Hyperparameters are refit on iterations `1, 1 + k, 1 + 2k, ...` and
    /// reused in between.
    pub refit_every: usize,
    pub warm_start: bool,
    /// Search on the full acquisition model.
    pub solver: SolverConfig,
    /// Search on the mean-only model that seeds the warm-start pool.
    pub warm_solver: SolverConfig,
    pub fit: FitOptions,
    /// How independent group pipelines are run.
    pub execution: Execution,
    pub seed: u64,
}

impl Default for BoConfig {
    fn default() -> Self {
        Self {
            max_iterations: 20,
            init_samples: None,
            pool_size: 10,
            beta: BetaSchedule::default(),
            polish_steps: 50,
            polish_step_size: 0.1,
            addgp_groups: None,
            refit_every: 1,
            warm_start: true,
            solver: SolverConfig { node_limit: 300, cut_rounds: 4, ..SolverConfig::default() },
            warm_solver: SolverConfig { node_limit: 100, cut_rounds: 4, ..SolverConfig::default() },
            fit: FitOptions::default(),
            execution: Execution::Parallel,
            seed: 0,
        }
    }
}

impl BoConfig {
    pub fn initial_samples(&self, dim: usize) -> usize {
        self.init_samples.unwrap_or((10 * dim).min(30))
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.initial_samples(dim) < 2 {
            return Err(Error::Config("at least two initial samples are needed".into()));
        }
        if self.refit_every == 0 {
            return Err(Error::Config("refit_every must be at least 1".into()));
        }
        if self.pool_size == 0 || self.solver.pool_size == 0 {
            return Err(Error::Config("pool sizes must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.solver.mip_gap) || !(0.0..1.0).contains(&self.warm_solver.mip_gap) {
            return Err(Error::Config("mip_gap must lie in [0, 1)".into()));
        }
        if let Some(groups) = &self.addgp_groups {
            validate_groups(groups, dim)?;
        }
        Ok(())
    }
}

/// Wall-clock seconds per stage of one iteration.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub fit: f64,
    pub linearize: f64,
    pub warm_start: f64,
    pub solve: f64,
    pub polish: f64,
    pub evaluate: f64,
}

/// Outcome of the acquisition pipeline for one dimension group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupProposal {
    pub dims: Vec<usize>,
    pub beta: f64,
    /// Exact LCB of the best warm start (infinite without warm starts).
    pub lcb_warm: f64,
    /// Exact LCB of the best member of the selection set.
    pub lcb_pool: f64,
    pub lcb_polished: f64,
    pub status: Option<SolveStatus>,
    pub gap: f64,
    pub nodes: usize,
    /// The search produced nothing and the proposal came from the warm starts.
    pub fallback: bool,
}

/// Next point to evaluate, in original units.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub x: Vec<f64>,
    pub groups: Vec<GroupProposal>,
    /// The pipeline output repeated a sample and was replaced by a random draw.
    pub duplicate: bool,
    /// Extra diagonal of the approximated Gram matrix; `None` when no level
    /// made it positive definite.
    pub nugget: Option<f64>,
    /// Hyperparameters used, one set per group.
    pub params: Vec<KernelParams>,
    pub timings: StageTimings,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub f: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub x: Vec<f64>,
    pub f: f64,
    pub best: f64,
    pub regret: Option<f64>,
    pub groups: Vec<GroupProposal>,
    pub duplicate: bool,
    pub nugget: Option<f64>,
    pub timings: StageTimings,
}

impl IterationRecord {
    pub fn fallback(&self) -> bool {
        self.groups.iter().any(|g| g.fallback)
    }

    /// Largest final gap over the groups.
    pub fn gap(&self) -> f64 {
        self.groups.iter().map(|g| g.gap).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoTrace {
    pub dim: usize,
    pub known_optimum: Option<f64>,
    pub initial: Vec<Sample>,
    pub records: Vec<IterationRecord>,
    /// Set when the objective failed; the trace holds everything before it.
    pub aborted: Option<String>,
}

impl BoTrace {
    pub fn best(&self) -> f64 {
        self.records
            .last()
            .map(|r| r.best)
            .unwrap_or_else(|| self.initial.iter().map(|s| s.f).fold(f64::INFINITY, f64::min))
    }

    pub fn samples(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.initial
            .iter()
            .map(|s| (s.x.as_slice(), s.f))
            .chain(self.records.iter().map(|r| (r.x.as_slice(), r.f)))
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream seed for `(seed, parts...)`.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix(seed), |acc, p| splitmix(acc ^ splitmix(*p)))
}

const STREAM_FIT: u64 = 1;
const STREAM_RANDOM_POOL: u64 = 2;
const STREAM_DUPLICATE: u64 = 3;
const STREAM_DESIGN: u64 = 4;

/// Exact posterior used for selection and polishing.
enum TrueModel<'a> {
    Single(&'a GpModel),
    Additive(&'a AdditiveGp),
}

impl TrueModel<'_> {
    fn component_lcb(&self, g: usize, z: &[f64], beta: f64) -> f64 {
        let post = match self {
            TrueModel::Single(gp) => gp.posterior(z),
            TrueModel::Additive(gp) => gp.component_posterior(g, z),
        };
        match post {
            Ok((m, v)) => lcb(m, v.sqrt(), beta),
            Err(_) => f64::INFINITY,
        }
    }
}

/// Scaled-space constraints assigned to each group.
fn split_known(known: &[KnownConstraint], groups: &[Vec<usize>]) -> Result<Vec<Vec<KnownConstraint>>> {
    let mut out = vec![Vec::new(); groups.len()];
    for c in known {
        let (g, r) = groups
            .iter()
            .enumerate()
            .find_map(|(g, dims)| c.restrict(dims).map(|r| (g, r)))
            .ok_or_else(|| Error::Config(format!("known constraint '{}' couples several groups", c.name())))?;
        out[g].push(r);
    }
    Ok(out)
}

fn scaled_known(problem: &Problem) -> Vec<KnownConstraint> {
    let b = &problem.bounds;
    let width: Vec<f64> = (0..b.dim()).map(|d| b.width(d)).collect();
    problem.known.iter().map(|c| c.affine_substitute(b.lower(), &width)).collect()
}

/// Rows of `x` restricted to `dims` with repeated slices dropped (first kept).
fn group_slice(ds: &Dataset, dims: &[usize]) -> Result<Dataset> {
    let mut xs: Vec<Vec<f64>> = Vec::new();
    let mut ys = Vec::new();
    for (row, y) in ds.select_dims(dims).into_iter().zip(ds.y()) {
        if xs.iter().all(|o| distance(o, &row) > crate::gp::DUPLICATE_TOL) {
            xs.push(row);
            ys.push(*y);
        }
    }
    Dataset::new(xs, ys)
}

/// Mean-only pool plus uniform feasible draws, each completed on `full`.
pub fn warm_start(
    posterior: &ApproxPosterior,
    full: &MiqpModel,
    pool_size: usize,
    solver: &SolverConfig,
    seed: u64,
) -> Result<Vec<Candidate>> {
    let bounds = &full.data.bounds;
    let known = &full.data.known;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut random = Vec::new();
    for _ in 0..pool_size {
        match sample_feasible(bounds, known, &mut rng) {
            Some(x) => random.push(x),
            None => {
                warn!("rejection sampling found no feasible point; using the mean-only pool alone");
                break;
            }
        }
    }
    let sub = MiqpModel::from_posterior(posterior, 0.0, bounds, known, false)?;
    let seeds: Vec<Candidate> = random.iter().filter_map(|x| sub.evaluate_candidate(x).ok()).collect();
    let cfg = SolverConfig { pool_size, ..solver.clone() };
    let res = solve(&sub, &cfg, &seeds);
    let mut out: Vec<Candidate> = Vec::new();
    for x in res.pool.iter().map(|c| &c.x).chain(&random) {
        if let Ok(c) = full.evaluate_candidate(x) {
            out.push(c);
        }
    }
    Ok(out)
}

struct GroupJob<'a> {
    g: usize,
    dims: &'a [usize],
    beta: f64,
    known: &'a [KnownConstraint],
    posterior: Option<&'a ApproxPosterior>,
}

struct GroupOutcome {
    z: Vec<f64>,
    proposal: GroupProposal,
    warm_time: f64,
    solve_time: f64,
    polish_time: f64,
}

fn run_group(job: &GroupJob, truth: &TrueModel, config: &BoConfig, seed: u64) -> Result<GroupOutcome> {
    let dim = job.dims.len();
    let bounds = Bounds::unit(dim);
    let score = |z: &[f64]| truth.component_lcb(job.g, z, job.beta);
    let started = Instant::now();
    let mut warm: Vec<Vec<f64>> = Vec::new();
    let mut selection: Vec<Vec<f64>> = Vec::new();
    let mut status = None;
    let mut gap = f64::INFINITY;
    let mut nodes = 0;
    let mut fallback = false;
    let mut solve_time = 0.0;
    match job.posterior {
        Some(post) => {
            let full = MiqpModel::from_posterior(post, job.beta, &bounds, job.known, true)?;
            let starts = if config.warm_start {
                warm_start(post, &full, config.pool_size, &config.warm_solver, seed)?
            } else {
                Vec::new()
            };
            warm = starts.iter().map(|c| c.x.clone()).collect();
            let solve_start = Instant::now();
            let res = solve(&full, &config.solver, &starts);
            solve_time = solve_start.elapsed().as_secs_f64();
            status = Some(res.status);
            gap = res.gap;
            nodes = res.nodes_explored;
            if res.incumbent.is_none() {
                fallback = true;
            }
            selection.extend(res.pool.into_iter().map(|c| c.x));
        }
        None => {
            fallback = true;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..config.pool_size {
                if let Some(z) = sample_feasible(&bounds, job.known, &mut rng) {
                    warm.push(z);
                }
            }
        }
    }
    let warm_time = started.elapsed().as_secs_f64() - solve_time;
    selection.extend(warm.iter().cloned());
    let scored: Vec<f64> = selection.iter().map(|z| score(z)).collect();
    let best = (0..selection.len())
        .min_by(|&a, &b| scored[a].total_cmp(&scored[b]))
        .ok_or_else(|| Error::InvalidInput("no feasible candidate for the acquisition step".into()))?;
    let lcb_pool = scored[best];
    let lcb_warm = scored[scored.len() - warm.len()..].iter().copied().fold(f64::INFINITY, f64::min);
    let polish_start = Instant::now();
    let z = polish_with(
        &selection[best],
        score,
        config.polish_steps,
        config.polish_step_size,
        &bounds,
        |z| known_violation(job.known, z) <= 1e-9,
    );
    let lcb_polished = score(&z);
    Ok(GroupOutcome {
        z,
        proposal: GroupProposal {
            dims: job.dims.to_vec(),
            beta: job.beta,
            lcb_warm,
            lcb_pool,
            lcb_polished,
            status,
            gap,
            nodes,
            fallback,
        },
        warm_time,
        solve_time,
        polish_time: polish_start.elapsed().as_secs_f64(),
    })
}

fn linearize(params: &KernelParams, dim: usize) -> Result<PwlKernel> {
    let bp = build_breakpoints_with(&SegmentPlan::default_for(dim), &Bounds::unit(dim), params.lengthscale)?;
    Ok(PwlKernel::new(bp, *params))
}

/// Approximated posteriors, raising the nugget of the approximated Gram
/// matrix while it stays indefinite. Returns the nugget used, or `None` if
/// every level fails.
fn approximate(
    params: &[KernelParams],
    groups: &[Vec<usize>],
    ds: &Dataset,
    additive: bool,
) -> Result<Option<(Vec<ApproxPosterior>, f64)>> {
    let scale: f64 = params.iter().map(|p| p.variance).sum();
    for rel in APPROX_NUGGETS {
        let nugget = rel * scale;
        let pwls: Vec<PwlKernel> = params
            .iter()
            .zip(groups)
            .map(|(p, g)| linearize(&p.with_noise(p.noise + nugget), g.len()))
            .collect::<Result<_>>()?;
        let built = if additive {
            ApproxPosterior::additive(pwls, groups, ds)
        } else {
            ApproxPosterior::new(pwls.into_iter().next().expect("one group"), ds).map(|p| vec![p])
        };
        match built {
            Ok(posts) => return Ok(Some((posts, nugget))),
            Err(Error::NotPositiveDefinite { .. }) => {
                warn!("approximated Gram matrix indefinite with nugget {nugget:e}");
            }
            Err(e) => return Err(e),
        }
    }
    Ok(None)
}

/// Minimizer of the exact LCB of `gp` over the unit box subject to `known`:
/// the full pipeline without fitting, for a fixed posterior. Warm starts and
/// search limits come from `config`.
pub fn minimize_lcb(
    gp: &GpModel,
    beta: f64,
    known: &[KnownConstraint],
    config: &BoConfig,
    seed: u64,
) -> Result<(Vec<f64>, GroupProposal)> {
    let ds = gp.dataset();
    let dims: Vec<usize> = (0..ds.dim()).collect();
    let approx = approximate(&[*gp.params()], std::slice::from_ref(&dims), ds, false)?;
    let job = GroupJob { g: 0, dims: &dims, beta, known, posterior: approx.as_ref().map(|a| &a.0[0]) };
    let out = run_group(&job, &TrueModel::Single(gp), config, seed)?;
    Ok((out.z, out.proposal))
}

/// One acquisition step on `dataset` (original units) at iteration `t >= 1`.
/// With `addgp_groups` set, each group runs the pipeline on its own
/// component and the coordinates are concatenated.
pub fn bo_step(dataset: &Dataset, problem: &Problem, t: usize, config: &BoConfig) -> Result<Proposal> {
    bo_step_with(dataset, problem, t, config, None)
}

/// [`bo_step`] that skips fitting when `reuse` holds one parameter set per
/// group.
pub fn bo_step_with(
    dataset: &Dataset,
    problem: &Problem,
    t: usize,
    config: &BoConfig,
    reuse: Option<&[KernelParams]>,
) -> Result<Proposal> {
    let dim = problem.bounds.dim();
    config.validate(dim)?;
    let additive = config.addgp_groups.is_some();
    let groups = config.addgp_groups.clone().unwrap_or_else(|| vec![(0..dim).collect()]);
    let known = split_known(&scaled_known(problem), &groups)?;
    let mut timings = StageTimings::default();

    let clock = Instant::now();
    let (sds, transform) = standardize(dataset, &problem.bounds)?;
    let fit_seed = |g: usize| derive_seed(config.seed, &[t as u64, g as u64, STREAM_FIT]);
    let fit_opts = FitOptions { execution: config.execution, ..config.fit };
    let reuse = reuse.filter(|p| p.len() == groups.len());
    let (params, single, sum) = if additive {
        let params = match reuse {
            Some(p) => p.to_vec(),
            None => groups
                .iter()
                .enumerate()
                .map(|(g, dims)| fit_hyperparameters_with(&group_slice(&sds, dims)?, fit_seed(g), &fit_opts))
                .collect::<Result<Vec<_>>>()?,
        };
        let sum = AdditiveGp::new(sds.clone(), groups.clone(), params.clone())?;
        (params, None, Some(sum))
    } else {
        let p = match reuse {
            Some(p) => p[0],
            None => fit_hyperparameters_with(&sds, fit_seed(0), &fit_opts)?,
        };
        (vec![p], Some(GpModel::new(sds.clone(), p)?), None)
    };
    let truth = match (&single, &sum) {
        (Some(gp), _) => TrueModel::Single(gp),
        (None, Some(gp)) => TrueModel::Additive(gp),
        (None, None) => unreachable!("one model is always fitted"),
    };
    timings.fit = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let approx = approximate(&params, &groups, &sds, additive)?;
    let nugget = approx.as_ref().map(|a| a.1);
    let posts = approx.map(|a| a.0);
    timings.linearize = clock.elapsed().as_secs_f64();

    let betas: Vec<f64> = groups.iter().map(|g| config.beta.value(t, g.len())).collect::<Result<_>>()?;
    let jobs: Vec<GroupJob> = (0..groups.len())
        .map(|g| GroupJob {
            g,
            dims: &groups[g],
            beta: betas[g],
            known: &known[g],
            posterior: posts.as_ref().map(|p| &p[g]),
        })
        .collect();
    let outcomes = config.execution.map(&jobs, |job| {
        run_group(job, &truth, config, derive_seed(config.seed, &[t as u64, job.g as u64, STREAM_RANDOM_POOL]))
    });
    let mut z = vec![0.0; dim];
    let mut proposals = Vec::with_capacity(groups.len());
    for out in outcomes {
        let out = out?;
        for (k, &d) in out.proposal.dims.iter().enumerate() {
            z[d] = out.z[k];
        }
        timings.warm_start += out.warm_time;
        timings.solve += out.solve_time;
        timings.polish += out.polish_time;
        proposals.push(out.proposal);
    }

    let mut x = transform.unscale_x(&z);
    problem.bounds.clamp(&mut x);
    let duplicate = dataset.x().iter().any(|o| distance(o, &x) <= DUPLICATE_DISTANCE);
    if duplicate {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[t as u64, STREAM_DUPLICATE]));
        x = sample_feasible(&problem.bounds, &problem.known, &mut rng)
            .ok_or_else(|| Error::InvalidInput("no feasible replacement for a repeated proposal".into()))?;
        warn!("iteration {t}: proposal repeated a sample; replaced by a random feasible point");
    }
    Ok(Proposal { x, groups: proposals, duplicate, nugget, params, timings })
}

/// Latin hypercube design with infeasible rows replaced by feasible draws.
pub fn initial_design(problem: &Problem, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let dim = problem.bounds.dim();
    let mut points = latin_hypercube(n, dim, &problem.bounds, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[STREAM_DESIGN]));
    for p in &mut points {
        if known_violation(&problem.known, p) > 1e-9 {
            *p = sample_feasible(&problem.bounds, &problem.known, &mut rng)
                .ok_or_else(|| Error::Config("no feasible point found for the initial design".into()))?;
        }
    }
    Ok(points)
}

fn evaluate(problem: &Problem, x: &[f64], iteration: usize) -> Result<f64> {
    match (problem.objective)(x) {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(v) => Err(Error::Objective { iteration, message: format!("non-finite value {v}") }),
        Err(message) => Err(Error::Objective { iteration, message }),
    }
}

fn run_loop(problem: &Problem, config: &BoConfig) -> Result<BoTrace> {
    let dim = problem.bounds.dim();
    config.validate(dim)?;
    let mut trace = BoTrace {
        dim,
        known_optimum: problem.known_optimum,
        initial: Vec::new(),
        records: Vec::new(),
        aborted: None,
    };
    let design = initial_design(problem, config.initial_samples(dim), config.seed)?;
    let mut dataset: Option<Dataset> = None;
    for x in design {
        let f = match evaluate(problem, &x, 0) {
            Ok(f) => f,
            Err(e) => {
                trace.aborted = Some(e.to_string());
                return Ok(trace);
            }
        };
        match &mut dataset {
            Some(ds) => ds.push(x.clone(), f)?,
            None => dataset = Some(Dataset::new(vec![x.clone()], vec![f])?),
        }
        trace.initial.push(Sample { x, f });
    }
    let mut dataset = dataset.ok_or_else(|| Error::Config("empty initial design".into()))?;
    let mut best = trace.best();
    let mut fitted: Option<Vec<KernelParams>> = None;
    for t in 1..=config.max_iterations {
        let reuse = fitted.as_deref().filter(|_| (t - 1) % config.refit_every != 0);
        let proposal = bo_step_with(&dataset, problem, t, config, reuse)?;
        fitted = Some(proposal.params.clone());
        let clock = Instant::now();
        let f = match evaluate(problem, &proposal.x, t) {
            Ok(f) => f,
            Err(e) => {
                trace.aborted = Some(e.to_string());
                return Ok(trace);
            }
        };
        let mut timings = proposal.timings;
        timings.evaluate = clock.elapsed().as_secs_f64();
        dataset.push(proposal.x.clone(), f)?;
        best = best.min(f);
        info!("iteration {t}: f = {f:.6}, best = {best:.6}");
        trace.records.push(IterationRecord {
            iteration: t,
            x: proposal.x,
            f,
            best,
            regret: problem.known_optimum.map(|o| best - o),
            groups: proposal.groups,
            duplicate: proposal.duplicate,
            nugget: proposal.nugget,
            timings,
        });
    }
    Ok(trace)
}

/// Full-kernel run; `addgp_groups` is ignored.
pub fn run_bo(problem: &Problem, config: &BoConfig) -> Result<BoTrace> {
    run_loop(problem, &BoConfig { addgp_groups: None, ..config.clone() })
}

/// Additive-kernel run over `config.addgp_groups`.
pub fn additive_run(problem: &Problem, config: &BoConfig) -> Result<BoTrace> {
    if config.addgp_groups.is_none() {
        return Err(Error::Config("additive run needs dimension groups".into()));
    }
    run_loop(problem, config)
}

/// Dispatches on whether groups are configured.
pub fn run(problem: &Problem, config: &BoConfig) -> Result<BoTrace> {
    run_loop(problem, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LinearConstraint, Sense};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn beta_closed_form() {
        assert!(close(beta_schedule(1, 2).unwrap(), 0.4 * 2f64.ln(), 1e-12));
        assert!(close(beta_schedule(1, 1).unwrap(), 0.138_629_436_1, 1e-9));
        assert!(close(beta_schedule(1, 2).unwrap(), 0.277_258_872_2, 1e-9));
        assert!(beta_schedule(0, 1).is_err());
        for t in 1..50 {
            assert!(beta_schedule(t + 1, 3).unwrap() > beta_schedule(t, 3).unwrap());
        }
        let th = BetaSchedule::Theorem { delta: 0.1, a: 1.0, b: 1.0, r: 1.0 };
        let pi2 = std::f64::consts::PI.powi(2);
        let want = 2.0 * (2.0 * 4.0 * pi2 / 0.3).ln() + 2.0 * (4.0 * (40.0f64).ln().sqrt()).ln();
        assert!(close(th.value(2, 1).unwrap(), want, 1e-12));
    }

    #[test]
    fn lcb_arithmetic() {
        assert_eq!(lcb(1.0, 0.0, 7.0), 1.0);
        assert_eq!(lcb(0.0, 1.0, 4.0), -2.0);
        assert!(lcb(0.3, 0.2, 0.5) <= 0.3);
    }

    #[test]
    fn seeds_are_stable_and_spread() {
        assert_eq!(derive_seed(5, &[1, 2]), derive_seed(5, &[1, 2]));
        assert_ne!(derive_seed(5, &[1, 2]), derive_seed(5, &[2, 1]));
        assert_ne!(derive_seed(5, &[1]), derive_seed(6, &[1]));
    }

    #[test]
    fn constraints_are_assigned_to_their_group() {
        let c = |name: &str, vars: &[usize]| {
            KnownConstraint::Linear(LinearConstraint::new(name, vars.iter().map(|&v| (v, 1.0)).collect(), Sense::Le, 1.0))
        };
        let groups = vec![vec![0, 2], vec![1]];
        let split = split_known(&[c("a", &[0, 2]), c("b", &[1])], &groups).unwrap();
        assert_eq!(split[0].len(), 1);
        assert_eq!(split[1].len(), 1);
        assert!(matches!(split_known(&[c("c", &[0, 1])], &groups), Err(Error::Config(_))));
    }

    #[test]
    fn slices_drop_repeated_rows() {
        let ds = Dataset::new(vec![vec![0.1, 0.5], vec![0.1, 0.7], vec![0.3, 0.7]], vec![1.0, 2.0, 3.0]).unwrap();
        let s = group_slice(&ds, &[0]).unwrap();
        assert_eq!(s.x(), &[vec![0.1], vec![0.3]]);
        assert_eq!(s.y(), &[1.0, 3.0]);
    }
}
