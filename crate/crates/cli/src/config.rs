//! Experiment configuration: a sectioned TOML file merged with flags and
//! environment overrides.

use std::path::Path;

use anyhow::{bail, Context, Result};
use mipbo::bo::{BetaSchedule, BoConfig};
use mipbo::exec::Execution;
use mipbo::solver::SolverConfig;
use serde::{Deserialize, Serialize};

pub const ENV_TIME_LIMIT: &str = "MIPBO_TIME_LIMIT";
pub const ENV_SUB_TIME_LIMIT: &str = "MIPBO_SUB_TIME_LIMIT";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub bo: BoSection,
    /// Search on the full acquisition model.
    pub solver: SolverSection,
    /// Search on the mean-only warm-start model.
    pub warm_solver: SolverSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub benchmark: String,
    pub replications: usize,
    /// Replication `k` runs with seed `seed + k`.
    pub seed: u64,
    /// Threads running replications concurrently.
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoSection {
    /// BO iterations after the initial design.
    pub budget: usize,
    pub init_samples: Option<usize>,
    pub pool_size: usize,
    /// Coefficient of the `coef * D * ln(2t)` schedule.
    pub beta_coef: f64,
    pub polish_steps: usize,
    pub polish_step_size: f64,
    pub warm_start: bool,
    pub fit_restarts: usize,
    /// Refit hyperparameters every this many iterations.
    pub refit_every: usize,
    pub addgp_groups: Option<Vec<Vec<usize>>>,
}

/// Unset fields keep the defaults of the search they configure.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub mip_gap: Option<f64>,
    pub time_limit: Option<f64>,
    pub node_limit: Option<usize>,
    pub cut_rounds: Option<usize>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self { benchmark: "branin".into(), replications: 20, seed: 0, workers: 1 }
    }
}

impl Default for BoSection {
    fn default() -> Self {
        let d = BoConfig::default();
        let BetaSchedule::Empirical { coef } = d.beta else { unreachable!("default schedule is empirical") };
        Self {
            budget: d.max_iterations,
            init_samples: d.init_samples,
            pool_size: d.pool_size,
            beta_coef: coef,
            polish_steps: d.polish_steps,
            polish_step_size: d.polish_step_size,
            warm_start: d.warm_start,
            fit_restarts: d.fit.restarts,
            refit_every: d.refit_every,
            addgp_groups: None,
        }
    }
}

impl SolverSection {
    fn apply(&self, base: &SolverConfig) -> SolverConfig {
        SolverConfig {
            mip_gap: self.mip_gap.unwrap_or(base.mip_gap),
            time_limit_s: self.time_limit.unwrap_or(base.time_limit_s),
            node_limit: self.node_limit.unwrap_or(base.node_limit),
            cut_rounds: self.cut_rounds.unwrap_or(base.cut_rounds),
            ..base.clone()
        }
    }

    fn filled(base: &SolverConfig) -> Self {
        Self {
            mip_gap: Some(base.mip_gap),
            time_limit: Some(base.time_limit_s),
            node_limit: Some(base.node_limit),
            cut_rounds: Some(base.cut_rounds),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Applies `MIPBO_TIME_LIMIT` and `MIPBO_SUB_TIME_LIMIT` when set.
    pub fn apply_env(&mut self) -> Result<()> {
        for (var, section) in [(ENV_TIME_LIMIT, &mut self.solver), (ENV_SUB_TIME_LIMIT, &mut self.warm_solver)] {
            if let Ok(v) = std::env::var(var) {
                let secs: f64 = v.trim().parse().with_context(|| format!("{var}={v} is not a number"))?;
                section.time_limit = Some(secs);
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.experiment.replications == 0 {
            bail!("replications must be at least 1");
        }
        let bench = mipbo::benchmarks::get(&self.experiment.benchmark)?;
        self.bo_config(0).validate(bench.dim())?;
        for (name, s) in [("solver", &self.solver), ("warm_solver", &self.warm_solver)] {
            if s.time_limit.is_some_and(|t| t.is_nan() || t < 0.0) {
                bail!("{name}.time_limit must be non-negative");
            }
        }
        Ok(())
    }

    /// Loop settings for the run with the given seed.
    pub fn bo_config(&self, seed: u64) -> BoConfig {
        let d = BoConfig::default();
        let execution = if self.experiment.workers > 1 { Execution::Parallel } else { Execution::Sequential };
        BoConfig {
            max_iterations: self.bo.budget,
            init_samples: self.bo.init_samples,
            pool_size: self.bo.pool_size,
            beta: BetaSchedule::Empirical { coef: self.bo.beta_coef },
            polish_steps: self.bo.polish_steps,
            polish_step_size: self.bo.polish_step_size,
            addgp_groups: self.bo.addgp_groups.clone(),
            refit_every: self.bo.refit_every,
            warm_start: self.bo.warm_start,
            solver: self.solver.apply(&d.solver),
            warm_solver: self.warm_solver.apply(&d.warm_solver),
            fit: mipbo::gp::FitOptions { restarts: self.bo.fit_restarts, execution, ..d.fit },
            execution,
            seed,
        }
    }

    /// The configuration with every solver setting spelled out, as written
    /// into run directories.
    pub fn resolved(&self) -> Self {
        let d = self.bo_config(0);
        Self {
            solver: SolverSection::filled(&d.solver),
            warm_solver: SolverSection::filled(&d.warm_solver),
            ..self.clone()
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}

/// Parses groups written as `0,1;2`.
pub fn parse_groups(s: &str) -> Result<Vec<Vec<usize>>> {
    s.split(';')
        .map(|g| {
            g.split(',')
                .map(|d| d.trim().parse::<usize>().with_context(|| format!("bad dimension '{d}' in groups '{s}'")))
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_library() {
        let c = ExperimentConfig::default();
        assert_eq!(c.experiment.replications, 20);
        let bo = c.bo_config(7);
        let lib = BoConfig::default();
        assert_eq!(bo.solver, lib.solver);
        assert_eq!(bo.warm_solver, lib.warm_solver);
        assert_eq!(bo.beta, lib.beta);
        assert_eq!(bo.seed, 7);
        assert_eq!(bo.execution, Execution::Sequential);
    }

    #[test]
    fn partial_file_and_round_trip() {
        let c: ExperimentConfig = toml::from_str(
            "[experiment]\nbenchmark = \"ks224\"\n[warm_solver]\nnode_limit = 7\n[bo]\naddgp_groups = [[0], [1]]\n",
        )
        .unwrap();
        assert_eq!(c.experiment.replications, 20);
        let bo = c.bo_config(0);
        assert_eq!(bo.warm_solver.node_limit, 7);
        assert_eq!(bo.warm_solver.cut_rounds, BoConfig::default().warm_solver.cut_rounds);
        let back: ExperimentConfig = toml::from_str(&c.resolved().to_toml().unwrap()).unwrap();
        assert_eq!(back.bo_config(0), bo);
        assert!(toml::from_str::<ExperimentConfig>("[bo]\nbugdet = 3\n").is_err());
    }

    #[test]
    fn validation() {
        let mut c = ExperimentConfig::default();
        c.validate().unwrap();
        c.experiment.replications = 0;
        assert!(c.validate().is_err());
        c.experiment.replications = 1;
        c.experiment.benchmark = "nope".into();
        assert!(c.validate().is_err());
        c.experiment.benchmark = "branin".into();
        c.bo.addgp_groups = Some(vec![vec![0]]);
        assert!(c.validate().is_err());
    }

    #[test]
    fn groups() {
        assert_eq!(parse_groups("0,1;2").unwrap(), vec![vec![0, 1], vec![2]]);
        assert!(parse_groups("0,x").is_err());
    }
}
