//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("unknown id `{0}`")]
    UnknownId(String),

    #[error("missing observation for id `{0}`")]
    MissingObservation(String),

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("malformed area `{id}`: {reason}")]
    MalformedArea { id: String, reason: String },

    #[error("metadata row {row}: {reason}")]
    MetadataRow { row: usize, reason: String },

    #[error("records without area assignment: {0}")]
    RecordsWithoutArea(String),

    #[error("file format: {0}")]
    Format(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
