use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Protocol(#[from] psi_core::Error),
    #[error("server refused request: {0}")]
    Remote(#[from] crate::net::RemoteError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
}

impl CliError {
    pub fn io(context: impl Into<String>, source: io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }

    /// 1 usage, 2 protocol, 3 IO or network.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Protocol(psi_core::Error::InvalidParameters(_)) => 1,
            CliError::Protocol(_) | CliError::Remote(_) => 2,
            CliError::Io { .. } => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
