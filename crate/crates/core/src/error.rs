use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("paths are not aligned: {0}")]
    GridMismatch(String),

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("validation failed: {0}")]
    Validation(String),

    /// A generator or logarithm was evaluated outside the open simplex.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("portfolio value became non-positive ({value}) at step {step}")]
    NonPositiveValue { step: usize, value: f64 },

    #[error("ingestion failed at row {row}: {message}")]
    Ingest { row: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("numerical check failed: {0}")]
    CheckFailed(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end.
    ///
    /// 2 = bad input (config, data, parameters), 3 = numerical failure,
    /// 4 = filesystem.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidGrid(_)
            | Error::GridMismatch(_)
            | Error::InvalidPath(_)
            | Error::Validation(_)
            | Error::Ingest { .. }
            | Error::Config(_) => 2,
            Error::Domain(_) | Error::NonPositiveValue { .. } | Error::CheckFailed(_) => 3,
            Error::Io { .. } => 4,
        }
    }
}
