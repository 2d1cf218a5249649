//! Error type shared across the detection engine.

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A caller violated an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("claim of {claim_tokens} tokens does not fit the {window}-token window (reserve {reserve})")]
    ClaimOverflow {
        claim_tokens: usize,
        window: usize,
        reserve: usize,
    },

    #[error("backend error ({context}): {message}")]
    Backend { context: String, message: String },

    #[error("backend unavailable after {attempts} attempts: {message}")]
    BackendUnavailable { attempts: usize, message: String },

    #[error("backend protocol error: {0}")]
    Protocol(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Attaches extra context (claim indices, pair identity) to a backend failure.
    pub fn with_context(self, context: impl Into<String>) -> Self {
        match self {
            Error::Backend { message, .. } => Error::Backend {
                context: context.into(),
                message,
            },
            Error::BackendUnavailable { attempts, message } => Error::BackendUnavailable {
                attempts,
                message: format!("{}: {message}", context.into()),
            },
            Error::Protocol(message) => Error::Protocol(format!("{}: {message}", context.into())),
            other => other,
        }
    }

    /// True for failures that come from a model backend or its transport.
    pub fn is_backend(&self) -> bool {
        matches!(
            self,
            Error::Backend { .. } | Error::BackendUnavailable { .. } | Error::Protocol(_)
        )
    }
}
