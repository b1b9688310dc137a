use thiserror::Error;

/// Errors produced across the scene synthesis stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("label {label} out of range for a space of {size} states")]
    OutOfRange { label: usize, size: usize },

    #[error("cannot parse instruction: {0}")]
    Parse(String),

    #[error("unknown vocabulary token '{0}'")]
    UnknownVocabulary(String),

    #[error("impossible posterior: {0}")]
    ImpossiblePosterior(String),

    #[error("unsatisfiable condition at stage '{stage}': {detail}")]
    Unsatisfiable { stage: String, detail: String },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn unsatisfiable(stage: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Unsatisfiable {
            stage: stage.into(),
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
