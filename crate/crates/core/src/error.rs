use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid embedding set: {0}")]
    InvalidEmbeddings(String),

    #[error("vocabulary intersection is empty")]
    EmptyIntersection,

    #[error("invalid task: {0}")]
    InvalidTask(String),

    #[error("cannot sample {requested} unrelated pairs after {attempts} attempts (found {found})")]
    PairSampling {
        requested: usize,
        found: usize,
        attempts: usize,
    },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid training input: {0}")]
    InvalidTraining(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("SMO did not converge within {iterations} iterations (violation {violation:.3e})")]
    NotConverged { iterations: usize, violation: f64 },

    #[error("every grid point failed; last error: {0}")]
    GridExhausted(String),

    #[error("invalid metric input: {0}")]
    InvalidMetric(String),

    #[error("invalid reduction: {0}")]
    InvalidReduction(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
