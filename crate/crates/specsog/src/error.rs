//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid particle system: {0}")]
    InvalidSystem(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("root solve failed: {0}")]
    RootSolve(String),

    #[error("tolerance {requested:.3e} infeasible: minimal achievable error is {achievable:.3e} ({context})")]
    InfeasibleTolerance {
        requested: f64,
        achievable: f64,
        context: String,
    },

    #[error("oracle did not converge within {shells} shells (last shell contribution {last_shell:.3e}, value {value:.6e})")]
    OracleNoConvergence {
        shells: usize,
        last_shell: f64,
        value: f64,
    },

    #[error("{path}:{line}: parse error: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
