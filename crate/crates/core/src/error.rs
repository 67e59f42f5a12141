use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("index {index} out of range for {op} with extent {extent}")]
    Index {
        op: &'static str,
        index: usize,
        extent: usize,
    },

    #[error("batch norm in train mode needs at least 2 rows, got {rows}")]
    DegenerateBatch { rows: usize },

    #[error("loss is empty: every target is masked")]
    EmptyLoss,

    #[error("metric undefined: no task has both a positive and a negative label")]
    MetricUndefined,

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("operation requires {expected} mode, registry is in {actual} mode")]
    Mode { expected: String, actual: String },

    #[error("run configurations cannot be paired: {0}")]
    Pairing(String),

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },

    #[error("frozen tensor `{name}` was modified")]
    FrozenMutated { name: String },

    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
