use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// Mass that cannot be transported under the prior, or a target that cannot be maintained.
    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("no convergence after {iterations} iterations (last change {last_change:e}): {detail}")]
    NonConvergence {
        iterations: usize,
        last_change: f64,
        detail: String,
    },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("policy evaluation failed on path {path} at step {step} (t = {time}): {message}")]
    Policy {
        path: usize,
        step: usize,
        time: f64,
        message: String,
    },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("parse: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
