use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
///
/// Each variant belongs to one [`ErrorCategory`], which the CLI maps onto a
/// process exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error in field `{field}`: {message}")]
    Parse { field: String, message: String },

    #[error("channel `{requested}` not found; available: {available:?}")]
    ChannelNotFound { requested: String, available: Vec<String> },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("format error at row {row}: {message}")]
    Format { row: usize, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape error: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("input error: {0}")]
    Input(String),

    #[error("value {value} outside domain {domain}")]
    Domain { value: f64, domain: String },

    #[error("training diverged: non-finite {term} loss")]
    Divergence { term: String },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Coarse error classes used for exit codes and machine-readable messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Usage,
    Data,
    Divergence,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Usage => 2,
            ErrorCategory::Data => 3,
            ErrorCategory::Divergence => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::Usage => "usage",
            ErrorCategory::Data => "data",
            ErrorCategory::Divergence => "divergence",
        }
    }
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Usage(_) | Error::Config(_) | Error::Domain { .. } => ErrorCategory::Usage,
            Error::Divergence { .. } => ErrorCategory::Divergence,
            _ => ErrorCategory::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn parse(field: &str, message: impl Into<String>) -> Self {
        Error::Parse { field: field.to_string(), message: message.into() }
    }

    pub(crate) fn shape(expected: impl Into<String>, actual: impl Into<String>) -> Self {
        Error::Shape { expected: expected.into(), actual: actual.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
