use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("invalid tensor: {0}")]
    Tensor(String),

    #[error("softmax row {row} has every position masked")]
    AllMasked { row: usize },

    #[error("target {target} at batch index {index} is out of range for {classes} classes")]
    TargetOutOfRange {
        index: usize,
        target: usize,
        classes: usize,
    },

    #[error("backward requires a scalar loss, got dims {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("vocabulary: {0}")]
    Vocab(String),

    #[error("target vocabulary size {requested} is too small; at least {required} entries are needed")]
    VocabTooSmall { requested: usize, required: usize },

    #[error("token id {id} at position {position} is outside the vocabulary (size {size})")]
    TokenOutOfRange {
        position: usize,
        id: u32,
        size: usize,
    },

    #[error("unification table line {line}: {message}")]
    Table { line: usize, message: String },

    #[error("dataset line {line}: {message}")]
    Malformed { line: usize, message: String },

    #[error(
        "label {label} maps to {first_surface:?} (line {first_line}) and {second_surface:?} (line {second_line})"
    )]
    InconsistentLabel {
        label: i64,
        first_line: usize,
        first_surface: String,
        second_line: usize,
        second_surface: String,
    },

    #[error("class {class} has {count} examples, fewer than k = {k}")]
    ClassTooSmall { class: usize, count: usize, k: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("tensor {name}: {message}")]
    Param { name: String, message: String },

    #[error("checkpoint is missing tensor {0}")]
    MissingTensor(String),

    #[error("checkpoint contains unknown tensor {0}")]
    UnknownTensor(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("non-finite gradient in tensor {0}")]
    NonFiniteGradient(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("metrics: {0}")]
    Metrics(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

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

    pub(crate) fn shape(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::Shape {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }
}
