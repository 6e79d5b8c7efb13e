use thiserror::Error;

/// Error type shared by every module in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shapes are inconsistent with the requested operation.
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    /// An argument violates the operation's preconditions.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A training or measurement configuration is incomplete or inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// An operation was called out of order (e.g. backward without a
    /// matching forward trace).
    #[error("state error: {0}")]
    State(String),

    /// Channel matrices cannot be built for measurement kinds with a
    /// continuous parameter distribution.
    #[error("unsupported channel: {0}")]
    UnsupportedChannel(String),

    /// A binary file does not match its declared format. `offset` is the
    /// byte position at which the mismatch was detected.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    /// Training produced a non-finite loss.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid_shape(msg: impl Into<String>) -> Self {
        Error::InvalidShape(msg.into())
    }

    pub fn invalid_argument(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn format(offset: u64, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }
}
