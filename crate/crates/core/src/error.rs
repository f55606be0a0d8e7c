use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("invalid group element encoding")]
    InvalidPoint,
    #[error("invalid scalar encoding")]
    InvalidScalar,
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error("malformed message at byte {offset}: {reason}")]
    MalformedMessage { offset: usize, reason: String },
    #[error("request holds {got} elements, server was provisioned for at most {max}")]
    TooManyElements { got: usize, max: usize },
    #[error("request reveal mode does not match the mode pinned by the server")]
    RevealModeMismatch,
    #[error("response holds {got} elements, expected {expected}")]
    CountMismatch { expected: usize, got: usize },
    #[error("client state was already used to process a response")]
    StateAlreadyUsed,
    #[error("unknown or destroyed handle {0}")]
    InvalidHandle(u64),
}

impl Error {
    pub(crate) fn malformed(offset: usize, reason: impl Into<String>) -> Self {
        Error::MalformedMessage {
            offset,
            reason: reason.into(),
        }
    }

    pub(crate) fn params(reason: impl Into<String>) -> Self {
        Error::InvalidParameters(reason.into())
    }
}
