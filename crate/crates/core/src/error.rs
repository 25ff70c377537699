use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("scaled distance must be non-negative, got {0}")]
    NegativeDistance(f64),

    #[error("rows {0} and {1} of the sample matrix coincide")]
    DuplicatePoint(usize, usize),

    #[error("point {index} lies outside the bounds in coordinate {coord}")]
    OutOfBounds { index: usize, coord: usize },

    #[error("matrix is not positive definite after jitter ladder {tried:?}")]
    NotPositiveDefinite { tried: Vec<f64> },

    #[error("candidate violates model constraints by {0:e}")]
    InfeasibleCandidate(f64),

    #[error("constraint '{name}' references variable {var} which is not an input coordinate")]
    NonInputVariable { name: String, var: usize },

    #[error("known constraint '{0}' is nonconvex; only linear and convex quadratic constraints are supported")]
    NonconvexConstraint(String),

    #[error("relaxed point is already feasible; update the incumbent instead of branching")]
    BranchOnFeasible,

    #[error("objective evaluation failed at iteration {iteration}: {message}")]
    Objective { iteration: usize, message: String },

    #[error("unknown benchmark '{0}'")]
    UnknownBenchmark(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
