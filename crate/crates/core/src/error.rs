use thiserror::Error;

/// Errors produced by the numerical routines and the training harness.
#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An iterative method stopped before reaching its tolerance.
    #[error("{what} did not converge (achieved tolerance {achieved:e})")]
    Convergence { what: &'static str, achieved: f64 },

    /// A training step produced a non-finite quantity.
    #[error("training diverged at step {step}: non-finite {term}")]
    Diverged { step: usize, term: String },

    /// A configuration document is malformed or inconsistent.
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
