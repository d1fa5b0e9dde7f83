use thiserror::Error;

/// Errors raised by the numerical kernels and their file formats.
#[derive(Debug, Error)]
pub enum Error {
    /// A grid, solver or experiment parameter violates its precondition.
    #[error("configuration error: {0}")]
    Config(String),
    /// An argument is inconsistent with the operation (wrong grid, bad support, ...).
    #[error("input error: {0}")]
    Input(String),
    /// The computation produced non-finite values or failed to make progress.
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// Malformed serialized data.
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

pub(crate) fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}
