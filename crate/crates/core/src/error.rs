use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An input lies outside the mathematical domain of an operation
    /// (non positive-definite covariance, negative weights, ...).
    #[error("domain error: {0}")]
    Domain(String),
    /// The caller combined arguments inconsistently.
    #[error("usage error: {0}")]
    Usage(String),
    /// A computation would exceed a configured cost or memory budget.
    #[error("resource limit exceeded: {0}")]
    Resource(String),
    /// A result is not representable in floating point.
    #[error("range error: {0}")]
    Range(String),
    /// A time-stepping scheme produced a non-finite state.
    #[error("numeric failure at step {step}: {detail}")]
    Numeric { step: usize, detail: String },
    /// A fixed-point iteration stopped before reaching its tolerance.
    #[error("no convergence after {iterations} iterations (last distance {last_distance:e}, ratios {ratios:?})")]
    NonConvergence {
        iterations: usize,
        last_distance: f64,
        ratios: Vec<f64>,
    },
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
