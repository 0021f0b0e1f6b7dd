//! Crate-wide error type.

use thiserror::Error;

/// Errors raised by any module in this crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or buffer shapes do not line up.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: String,
        expected: String,
        got: String,
    },

    /// A configuration value is unusable (wrong divisibility, zero size, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// An input value lies outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A computation produced or encountered a non-finite value.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A file does not match its declared binary format.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    /// A flat parameter vector does not match its layout.
    #[error("layout error: {0}")]
    Layout(String),

    /// An index is out of range.
    #[error("index error: {0}")]
    Index(String),

    /// Invalid caller-supplied data (empty lists, bad fractions, ...).
    #[error("input error: {0}")]
    Input(String),

    /// A checkpoint does not match the requested configuration.
    #[error("incompatible checkpoint: {0}")]
    Incompatible(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dimension(
        context: impl Into<String>,
        expected: impl Into<String>,
        got: impl Into<String>,
    ) -> Self {
        Error::Dimension {
            context: context.into(),
            expected: expected.into(),
            got: got.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
