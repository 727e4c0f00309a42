use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("{path}: file not found")]
    MissingFile { path: PathBuf },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}:{line}: label out of range ({label} >= {num_classes})")]
    LabelOutOfRange {
        path: PathBuf,
        line: usize,
        label: usize,
        num_classes: usize,
    },

    #[error("{path}:{line}: dangling edge endpoint {node} (num_nodes = {num_nodes})")]
    DanglingEdge {
        path: PathBuf,
        line: usize,
        node: usize,
        num_nodes: usize,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("cannot add {requested} edges: only {available} non-edges remain")]
    Saturated { requested: usize, available: usize },

    #[error("training diverged (non-finite loss at epoch {epoch}) for {config}")]
    Diverged { epoch: usize, config: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
