use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("{what} did not converge after {iterations} iterations: {detail}")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        detail: String,
    },

    #[error("condition {value} outside the trained range [{min}, {max}] (extrapolation not enabled)")]
    ConditionOutOfRange { value: f64, min: f64, max: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite loss at step {step}: d_loss={d_loss}, g_loss={g_loss}")]
    NonFiniteLoss { step: u64, d_loss: f64, g_loss: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("refusing to overwrite existing {0} (pass --force)")]
    Exists(PathBuf),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// Whether the failure stems from user input rather than the run itself.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Invalid(_) | Error::ConditionOutOfRange { .. } | Error::Exists(_)
        )
    }
}
