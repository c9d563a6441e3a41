//! Error type shared by all pipeline stages.

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A line of an input file is not valid JSON for its schema.
    #[error("{path}:{line}: parse error: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// Structurally valid input that violates a data invariant.
    #[error("schema error ({context}): {message}")]
    Schema { context: String, message: String },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("training error: {0}")]
    Training(String),

    /// A partition invariant was violated (empty group, bad group id, ...).
    #[error("partition error: {0}")]
    Partition(String),

    /// Non-finite values or a numerical routine that failed to converge.
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    /// Inputs that must agree (e.g. image id sets) do not.
    #[error("input mismatch: {0}")]
    InputMismatch(String),
}

impl Error {
    /// Internal failures (exit code 2 territory) as opposed to bad input.
    pub fn is_internal(&self) -> bool {
        matches!(self, Error::Numeric(_) | Error::Partition(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
