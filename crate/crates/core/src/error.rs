use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("unsupported dimensions: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("autodiff: {0}")]
    Autodiff(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("bad magic bytes in tensor file (expected \"EDNO\")")]
    BadMagic,

    #[error("unsupported tensor file version {0}")]
    UnsupportedVersion(u32),

    #[error("truncated tensor file: {0}")]
    Truncated(String),

    #[error("dtype mismatch for record `{name}`: stored {stored}, requested {requested}")]
    DtypeMismatch {
        name: String,
        stored: &'static str,
        requested: &'static str,
    },

    #[error("missing record `{0}`")]
    MissingRecord(String),

    #[error("dataset: {0}")]
    Dataset(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// True for errors caused by invalid user input rather than I/O or
    /// numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Shape(_)
                | Error::Dimension(_)
                | Error::Config(_)
                | Error::BadMagic
                | Error::UnsupportedVersion(_)
                | Error::Truncated(_)
                | Error::DtypeMismatch { .. }
                | Error::MissingRecord(_)
                | Error::Dataset(_)
        )
    }
}
