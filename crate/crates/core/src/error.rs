use thiserror::Error;

/// Errors raised by the simulator, model builders and trainers.
#[derive(Debug, Error)]
pub enum QseqError {
    /// A caller supplied an argument outside the operation's domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// A numerical routine failed to converge or produced a non-finite value.
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, QseqError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(QseqError::InvalidArgument(msg.into()))
}
