use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty distribution")]
    EmptyDistribution,
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("unsorted input: month {found} follows {previous}")]
    UnsortedInput { previous: String, found: String },
    #[error("no tags")]
    NoTags,
    #[error("duplicate tag: {0}")]
    DuplicateTag(String),
    #[error("too many tags: {0} (at most 5 allowed)")]
    TooManyTags(usize),
    #[error("invalid tag {0:?}")]
    InvalidTag(String),
    #[error("invalid tags field: {0}")]
    InvalidTagsField(String),
    #[error("invalid month {0:?}")]
    InvalidMonth(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("line {line}: {reason}")]
    Malformed { line: u64, reason: String },
    #[error("invalid trace: {0}")]
    InvalidTrace(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
