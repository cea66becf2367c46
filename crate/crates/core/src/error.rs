use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Shape(String),
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("variable does not belong to this tape")]
    ForeignVar,
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("empty sequence")]
    EmptySequence,
    #[error("no sentiment-cell state (only the flow variant has one)")]
    NoSentimentCell,
    #[error("sentiment loss requested for the {0:?} variant, which has no classifier")]
    NoClassifier(crate::model::Variant),
    #[error("malformed caption: {0}")]
    MalformedCaption(String),
    #[error("unknown token id {0}")]
    UnknownToken(usize),
    #[error("length mismatch: {0} logit vectors for {1} gold tokens")]
    LengthMismatch(usize, usize),
    #[error("missing parameter `{0}`")]
    MissingParam(String),
    #[error("missing gradient for parameter `{0}`")]
    MissingGradient(String),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("invalid `{field}`: {reason}")]
    InvalidField { field: String, reason: String },
    #[error("unknown sentiment label `{0}` (expected neg, neu or pos)")]
    UnknownLabel(String),
    #[error("label flip is undefined for a neutral request")]
    NeutralFlip,
    #[error("sentiment lexicons overlap on: {}", .0.join(", "))]
    OverlappingLexicons(Vec<String>),
    #[error("non-finite loss in epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },
    #[error("{path}:{line}: {reason}")]
    Parse { path: String, line: usize, reason: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}
