use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("parameter sets are not aggregation-compatible: {0}")]
    Incompatible(String),

    #[error("non-finite value produced in {0}")]
    NonFinite(&'static str),

    #[error("backward called without a matching cached forward pass")]
    MissingForwardCache,

    #[error("label {label} out of range for {classes} classes")]
    InvalidLabel { label: usize, classes: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(&'static str),

    #[error("IDX parse error in {path}: {reason}")]
    IdxParse { path: PathBuf, reason: String },

    #[error(
        "generation quota missed for class {class}: {accepted}/{required} accepted after {attempts} attempts"
    )]
    PartialQuota {
        class: usize,
        accepted: usize,
        required: usize,
        attempts: usize,
        partial: Box<crate::protocol::DpmsOutput>,
    },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("missing counter: {0}")]
    MissingCounter(&'static str),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(expected: &[usize], actual: &[usize]) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_vec(),
            actual: actual.to_vec(),
        }
    }
}
