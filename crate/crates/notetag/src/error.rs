//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    // catalog / handbook
    #[error("unknown category: {0}")]
    UnknownCategory(String),
    #[error("unknown handbook dimension: {0}")]
    UnknownDimension(String),
    #[error("duplicate handbook dimension: {0}")]
    DuplicateDimension(String),
    #[error("handbook category {handbook} does not match note category {note}")]
    CategoryMismatch { handbook: String, note: String },

    // gateway
    #[error("request timed out after {0} attempts")]
    Timeout(u32),
    #[error("rate limited after {0} attempts")]
    RateLimited(u32),
    #[error("unauthorized: {0}")]
    Unauthorized(String),
    #[error("malformed model response: {0}")]
    MalformedResponse(String),
    #[error("offline cache miss for fingerprint {0}")]
    CacheMiss(String),

    // parsing / scoring
    #[error("tag importance {0} outside [1,5]")]
    ImportanceOutOfRange(i64),
    #[error("judge value out of domain: {0}")]
    ValueOutOfDomain(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input")]
    EmptyInput,

    // dataset construction
    #[error("tag set references missing note: {0}")]
    MissingNote(String),
    #[error("note appears more than once: {0}")]
    DuplicateNote(String),
    #[error("no tag set for note: {0}")]
    MissingTagSet(String),

    // features / model
    #[error("encoder failure: {0}")]
    EncoderFailure(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("non-finite loss: {0}")]
    NonFiniteLoss(String),

    // pipeline
    #[error("stage {stage} failed on {item}: {source}")]
    Stage { stage: &'static str, item: String, source: Box<Error> },

    // plumbing
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("http error: {0}")]
    Http(String),
}

pub type Result<T> = std::result::Result<T, Error>;
