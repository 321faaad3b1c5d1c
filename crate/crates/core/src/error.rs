use thiserror::Error;

/// Errors raised by the recognition toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("length mismatch: {what} has {left} vs {right}")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("invalid embedding{}: {reason}", fmt_item(.item))]
    InvalidEmbedding { item: Option<String>, reason: String },

    #[error("invalid label {0}: must be +1 or -1")]
    InvalidLabel(i64),

    #[error("duplicate {kind} '{value}'")]
    Duplicate { kind: &'static str, value: String },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("degenerate weights: sum of |w| is {0:e}")]
    DegenerateWeights(f64),

    #[error("weight {index} = {value} outside [-1, 1]")]
    WeightOutOfRange { index: usize, value: f64 },

    #[error("labels must contain both classes")]
    SingleClass,

    #[error("class {label:+} has {found} item(s), at least {needed} required")]
    InsufficientClass {
        label: i8,
        needed: usize,
        found: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("prompt mismatch at index {index}: recognizer has '{expected}', prompt set has '{found}'")]
    PromptMismatch {
        index: usize,
        expected: String,
        found: String,
    },

    #[error("grid search over {0} prompts is too large (at most 4)")]
    GridTooLarge(usize),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("item '{id}': {source}")]
    Item { id: String, source: Box<Error> },

    #[error("unsupported format_version {0}")]
    UnsupportedVersion(u64),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

fn fmt_item(item: &Option<String>) -> String {
    match item {
        Some(id) => format!(" '{id}'"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn invalid_embedding(reason: impl Into<String>) -> Self {
        Error::InvalidEmbedding {
            item: None,
            reason: reason.into(),
        }
    }

    pub(crate) fn in_item(self, id: &str) -> Self {
        match self {
            e @ Error::InvalidEmbedding { item: Some(_), .. } => e,
            e @ Error::InvalidEmbedding { item: None, .. } => e.for_item(id),
            other => Error::Item {
                id: id.to_string(),
                source: Box::new(other),
            },
        }
    }

    /// Attach an item id to an embedding validation error.
    pub(crate) fn for_item(self, id: &str) -> Self {
        match self {
            Error::InvalidEmbedding { item: None, reason } => Error::InvalidEmbedding {
                item: Some(id.to_string()),
                reason,
            },
            other => other,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            return Error::Io(e.into());
        }
        Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
