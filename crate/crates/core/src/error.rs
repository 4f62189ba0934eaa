//! Crate-wide error type.

use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Underlying I/O failure, annotated with the path involved.
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    /// A cell- or line-level problem in a text file. `line` and `column`
    /// are 1-based; `column` 0 means the whole line.
    #[error("{path}:{line}:{column}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    /// A structural problem in a binary or structured file.
    #[error("{path}: {message}")]
    BadFile { path: PathBuf, message: String },

    /// A matrix value that violates an invariant (non-finite, bad shape).
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    /// Stimulus-ID alignment failure; the message lists the offending IDs.
    #[error("alignment failed: {0}")]
    Misaligned(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Cholesky factorization hit a non-positive pivot.
    #[error("numerically singular system (alpha = {alpha})")]
    SingularSystem { alpha: f64 },

    /// Bad settings: empty grids, non-positive alphas, invalid fractions.
    /// The message names the offending field.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Cosine distance is undefined for the zero vector.
    #[error("zero vector: {0}")]
    ZeroVector(String),

    /// Input that makes the requested statistic undefined.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    /// A decoder-grid job failed; identifies the pair before the cause.
    #[error("job failed for subject '{subject_id}', model '{model_id}': {source}")]
    JobFailed {
        subject_id: String,
        model_id: String,
        #[source]
        source: Box<Error>,
    },

    /// A manifest-referenced matrix could not be loaded or aligned.
    #[error("cannot use matrix for {kind} '{id}' ({path}): {source}")]
    EntityMatrix {
        kind: &'static str,
        id: String,
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn bad_file(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::BadFile {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn malformed(
        path: impl Into<PathBuf>,
        line: usize,
        column: usize,
        message: impl Into<String>,
    ) -> Self {
        Error::Malformed {
            path: path.into(),
            line,
            column,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
