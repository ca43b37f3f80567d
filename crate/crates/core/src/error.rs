use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input data does not satisfy an operation's preconditions.
    #[error("rejected input: {0}")]
    InvalidInput(String),

    /// A configuration value is out of its allowed range.
    #[error("rejected configuration: {0}")]
    InvalidConfig(String),

    /// A record in a manifest or dataset failed validation.
    #[error("validation failed for sample `{id}`: {message}")]
    Validation { id: String, message: String },

    /// A binary file has a bad magic, version or length.
    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    /// Training produced a non-finite loss.
    #[error("non-finite loss while training `{model}` at step {step} (lr = {lr:e})")]
    NonFiniteLoss { model: String, step: usize, lr: f64 },

    /// A verification run found failing checks.
    #[error("{0} verification check(s) failed")]
    VerificationFailed(usize),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Process exit code: 1 for validation problems, 2 for runtime or numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_)
            | Error::InvalidConfig(_)
            | Error::Validation { .. }
            | Error::Format { .. }
            | Error::Json(_) => 1,
            Error::Io { .. } | Error::NonFiniteLoss { .. } | Error::VerificationFailed(_) => 2,
        }
    }
}
