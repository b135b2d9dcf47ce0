use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library.
///
/// The variants map onto the process exit codes used by the command-line
/// front end: usage/config errors, data errors and numeric errors.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error in {path} at data row {row}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("insufficient data: need {needed} timestamps, have {available}")]
    InsufficientData { needed: usize, available: usize },

    #[error("alignment error: horizon {horizon} is not a multiple of the seasonal period {tau}; choose H as a multiple of tau")]
    Alignment { horizon: usize, tau: usize },

    #[error("infeasible regime: D*E = {de} must exceed 1 + 1/tau = {limit}")]
    Infeasible { de: f64, limit: f64 },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("training diverged at epoch {epoch}: {message}")]
    Diverged {
        epoch: usize,
        message: String,
        /// Per-epoch total loss up to the last finite epoch.
        history: Vec<f64>,
    },

    #[error("artifact incompatible with config: {0}")]
    Incompatible(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl Error {
    /// Process exit code: 2 usage/config, 3 data, 4 numeric/divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_)
            | Error::Config(_)
            | Error::Alignment { .. }
            | Error::Infeasible { .. }
            | Error::Incompatible(_) => 2,
            Error::Parse { .. } | Error::Data(_) | Error::InsufficientData { .. } | Error::Io { .. } | Error::Serde(_) => 3,
            Error::Numeric(_) | Error::Diverged { .. } => 4,
        }
    }
}
