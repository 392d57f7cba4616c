//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad input to an operation (shape mismatch, out-of-inventory character,
    /// over-long text, invalid ids).
    #[error("validation error: {0}")]
    Validation(String),

    /// Bad configuration (empty asset catalog, degenerate lexicon, invalid
    /// model dimensions).
    #[error("configuration error: {0}")]
    Config(String),

    /// A persisted artifact is inconsistent with its manifest (missing file,
    /// checksum mismatch, wrong shape, truncated archive).
    #[error("integrity error: {0}")]
    Integrity(String),

    /// A persisted artifact declares a format version this build cannot read.
    #[error("unsupported {context} version {found:?} (supported: {supported})")]
    UnsupportedVersion {
        context: &'static str,
        found: String,
        supported: &'static str,
    },

    /// Non-finite values where finite ones are required.
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn integrity(msg: impl Into<String>) -> Self {
        Error::Integrity(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
