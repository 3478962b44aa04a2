use thiserror::Error;

/// Crate-wide error type.
///
/// The CLI maps variants onto exit codes: contract violations
/// ([`Error::Spec`], [`Error::Input`], [`Error::Stream`]) exit 3, I/O
/// failures exit 4.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid camera spec: {0}")]
    Spec(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("bitstream error: {0}")]
    Stream(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn spec(msg: impl Into<String>) -> Self {
        Error::Spec(msg.into())
    }

    pub fn stream(msg: impl Into<String>) -> Self {
        Error::Stream(msg.into())
    }
}
