use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FggcdError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("backward requires a scalar loss, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },

    #[error("prototype buffer is empty")]
    EmptyPrototypes,

    #[error("client {client} diverged: non-finite loss at epoch {epoch}")]
    Divergence { client: usize, epoch: usize },

    #[error("known class {0} has no labeled nodes on any client")]
    MissingKnownClass(usize),

    #[error("dataset {path}: {msg}")]
    Dataset { path: PathBuf, msg: String },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, FggcdError>;

impl FggcdError {
    pub(crate) fn dataset(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Self::Dataset {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
