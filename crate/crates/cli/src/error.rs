//! CLI error kinds and their exit-code contract:
//! 0 success, 2 invalid flags, 3 calibration failure, 4 table/model
//! mismatch (including unreadable or corrupt tables), 1 anything else.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad or inconsistent flags; the message names the offending flag.
    #[error("{0}")]
    Usage(String),

    /// Calibration could not run or complete.
    #[error("calibration failed: {0}")]
    Calibration(sqdit_core::Error),

    /// Table files disagree with each other, the model, or are corrupt.
    #[error("{0}")]
    Mismatch(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] sqdit_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Calibration(_) => 3,
            CliError::Mismatch(_) => 4,
            CliError::Io { .. } | CliError::Core(_) => 1,
        }
    }

    pub fn io(path: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
