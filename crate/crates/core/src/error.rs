use std::path::PathBuf;

use thiserror::Error;

/// Errors across ingestion, calibration, selection, judging, and sessions.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Malformed {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("duplicate question id {id:?} at line {line}")]
    DuplicateId { id: String, line: usize },

    #[error("embedding for {id:?} has dimension {got}, expected {expected}")]
    DimensionMismatch {
        id: String,
        expected: usize,
        got: usize,
    },

    #[error("embedding for {id:?} has zero norm")]
    ZeroNormEmbedding { id: String },

    #[error("answer key {key:?} for {id:?} does not match exactly one option label")]
    BadAnswerKey { id: String, key: String },

    #[error("unknown question id {id:?} at line {line}")]
    UnknownQuestion { id: String, line: usize },

    #[error("duplicate response for ({model:?}, {question:?}) at line {line}")]
    DuplicateResponse {
        model: String,
        question: String,
        line: usize,
    },

    #[error("correctness must be 0 or 1, got {value:?} at line {line}")]
    NonBinaryCorrectness { value: String, line: usize },

    #[error("question {id:?} has no embedding")]
    MissingEmbedding { id: String },

    #[error("question {id:?} has no calibrated difficulty")]
    Uncalibrated { id: String },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("numerical failure at step {step}: {what}")]
    Numerical { step: usize, what: String },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("judge: {0}")]
    Judge(String),

    #[error("respondent {model:?} failed on {question:?}: {why}")]
    Respondent {
        model: String,
        question: String,
        why: String,
    },

    #[error("{0}")]
    Other(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
