pub mod benchmarks;
pub mod bo;
pub mod bounds;
pub mod error;
pub mod exec;
pub mod gp;
pub mod io;
pub mod linalg;
pub mod lp;
pub mod model;
pub mod nelder_mead;
pub mod pwl;
pub mod solver;

pub use bounds::Bounds;
pub use error::{Error, Result};
pub use exec::Execution;
