//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is rank deficient: neither full column rank nor full row rank")]
    RankDeficient,

    #[error("singular value decomposition did not converge")]
    SvdFailure,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point lies outside the domain of the nonsmooth term")]
    Infeasible,

    #[error("search direction is not a descent direction (model decrement {0})")]
    NotDescent(f64),

    #[error("line search failed to find an acceptable stepsize after {0} backtracks")]
    LineSearchFailure(usize),

    #[error("empty segment [{0}, {1}]")]
    EmptySegment(f64, f64),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("plot error: {0}")]
    Plot(String),
}

pub type Result<T> = std::result::Result<T, Error>;
