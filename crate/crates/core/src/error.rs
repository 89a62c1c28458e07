use thiserror::Error;

use crate::integrator::IntegrationError;

/// Errors surfaced by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{key}`: {reason}")]
    InvalidParameter { key: String, reason: String },

    #[error("initial state is the stable equilibrium with zero velocity, where the moving mass cannot inject momentum")]
    NonControllableStart,

    #[error("integration failed: {0}")]
    Integrator(#[from] IntegrationError),

    #[error("timestamps are not strictly increasing at sample {index}")]
    NonMonotonicTime { index: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("trace error: {0}")]
    Trace(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(key: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            key: key.to_string(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
