//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration: bad sizes, divisibility violations, parameter
    /// ranges. Maps to CLI exit code 1.
    #[error("configuration error: {0}")]
    Config(String),

    /// Shape mismatch between two values, naming the stage that detected it.
    #[error("shape mismatch at {stage}: expected {expected}, got {got}")]
    Shape {
        stage: String,
        expected: String,
        got: String,
    },

    /// Numerically singular pivot during LU factorization.
    #[error("numerically singular pivot at index {pivot}")]
    SingularPivot { pivot: usize },

    /// Numerical failure (NaN loss, non-convergence treated as fatal, ...).
    /// Maps to CLI exit code 2.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Malformed file contents (bad magic, truncated payload, parse error).
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn shape(stage: impl Into<String>, expected: impl Into<String>, got: impl Into<String>) -> Self {
        Error::Shape {
            stage: stage.into(),
            expected: expected.into(),
            got: got.into(),
        }
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
