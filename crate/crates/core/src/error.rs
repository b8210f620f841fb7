use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the enhancement pipeline.
#[derive(Debug, Error)]
pub enum LasqError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),

    #[error("malformed header in {}: {reason}", path.display())]
    MalformedHeader { path: PathBuf, reason: String },

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("truncated image data in {}: expected {expected} bytes, found {found}", path.display())]
    Truncated { path: PathBuf, expected: usize, found: usize },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// `line` is 1-based; 0 marks values that did not come from a file.
    #[error("{}", config_message(*line, message))]
    Config { line: usize, message: String },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn config_message(line: usize, message: &str) -> String {
    match line {
        0 => format!("config error: {message}"),
        n => format!("config error at line {n}: {message}"),
    }
}

pub type Result<T> = std::result::Result<T, LasqError>;

pub(crate) fn invalid(msg: impl Into<String>) -> LasqError {
    LasqError::InvalidArgument(msg.into())
}

pub(crate) fn shape(msg: impl Into<String>) -> LasqError {
    LasqError::ShapeMismatch(msg.into())
}
