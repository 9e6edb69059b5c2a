//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A distribution parameter lies outside its domain.
    #[error("parameter out of domain: {0}")]
    ParamDomain(String),

    /// Inputs have inconsistent shapes.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Input data failed validation (non-finite values, bad ranges, ...).
    #[error("invalid input: {0}")]
    Validation(String),

    /// A factorization or solve failed.
    #[error("linear algebra failure: {0}")]
    LinAlg(String),

    /// An error raised inside a named sampler step.
    #[error("{step}: {source}")]
    Step {
        step: &'static str,
        #[source]
        source: Box<Error>,
    },

    /// An error raised during a specific Gibbs sweep.
    #[error("sweep {sweep} failed: {source}")]
    Sweep {
        sweep: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn param(msg: impl Into<String>) -> Self {
        Error::ParamDomain(msg.into())
    }

    pub fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn linalg(msg: impl Into<String>) -> Self {
        Error::LinAlg(msg.into())
    }

    /// Tag this error with the sampler step it came from.
    pub fn in_step(self, step: &'static str) -> Self {
        Error::Step {
            step,
            source: Box::new(self),
        }
    }

    /// Tag this error with the sweep index it came from.
    pub fn in_sweep(self, sweep: usize) -> Self {
        Error::Sweep {
            sweep,
            source: Box::new(self),
        }
    }

    /// True when the failure is numerical rather than a caller mistake.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::LinAlg(_) => true,
            Error::Step { source, .. } | Error::Sweep { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
