use std::path::Path;

use lasq_core::LasqError;
use thiserror::Error;

/// Command failure, grouped into the categories the exit code reports.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub const EXIT_CONFIG: i32 = 2;
    pub const EXIT_IO: i32 = 3;
    pub const EXIT_NUMERIC: i32 = 4;

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => Self::EXIT_CONFIG,
            CliError::Io(_) => Self::EXIT_IO,
            CliError::Numeric(_) => Self::EXIT_NUMERIC,
        }
    }

    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }
}

impl From<LasqError> for CliError {
    fn from(e: LasqError) -> Self {
        let msg = e.to_string();
        match e {
            LasqError::Config { .. } | LasqError::InvalidArgument(_) | LasqError::ShapeMismatch(_) => {
                CliError::Config(msg)
            }
            LasqError::FileNotFound(_)
            | LasqError::MalformedHeader { .. }
            | LasqError::UnsupportedFormat(_)
            | LasqError::Truncated { .. }
            | LasqError::Checkpoint(_)
            | LasqError::Io { .. } => CliError::Io(msg),
            LasqError::NonFinite(_) => CliError::Numeric(msg),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
