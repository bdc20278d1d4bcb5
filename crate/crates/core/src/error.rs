use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = AplError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum AplError {
    #[error("{op}: dimension mismatch between {lhs:?} and {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{op}: empty input")]
    EmptyInput { op: &'static str },

    #[error("backward requires a scalar root, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },

    #[error("pathway '{name}': {message}")]
    Pathway { name: String, message: String },

    #[error("C-index undefined: no comparable pairs")]
    UndefinedConcordance,

    #[error(
        "non-finite training loss at epoch {epoch}, batch {batch}, case '{case_id}' (loss = {loss})"
    )]
    Diverged {
        epoch: usize,
        batch: usize,
        case_id: String,
        loss: f64,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl AplError {
    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        AplError::Shape {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    pub(crate) fn file(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        AplError::File {
            path: path.into(),
            message: message.into(),
        }
    }
}
