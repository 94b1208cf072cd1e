use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {field}: {reason}")]
    Invalid { field: String, reason: String },

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("no histogram for column `{0}`")]
    MissingHistogram(String),

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("no label source")]
    NoLabelSource,

    #[error("instance not gated: credibility {credibility} exceeds bound {d}")]
    NotGated { credibility: f64, d: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("non-finite loss")]
    NonFinite,

    #[error("experience pool is empty")]
    EmptyPool,

    #[error("knowledge base is empty")]
    EmptyKnowledgeBase,

    #[error("unknown behavior `{0}`")]
    UnknownBehavior(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
