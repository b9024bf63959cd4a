use std::io;

use thiserror::Error;

/// Errors produced by the retrieval engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("empty prototype")]
    EmptyPrototype,

    #[error("degenerate pooling: mean token embedding has zero norm")]
    DegeneratePooling,

    #[error("item not in prototype: bucket {bucket} count would underflow")]
    NotInPrototype { bucket: u32 },

    #[error("summary underflow: cannot remove from an empty cluster summary")]
    SummaryUnderflow,

    #[error("memory uninitialized")]
    MemoryUninitialized,

    #[error("insufficient candidates: need {needed} documents, found {found}")]
    InsufficientCandidates { needed: usize, found: usize },

    #[error("non-finite loss {loss} at step {step}")]
    NonFiniteLoss { step: u64, loss: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown item id {0:?}")]
    UnknownItem(String),

    #[error("malformed {format} input: {reason}")]
    Format { format: &'static str, reason: String },

    #[error("session {session}: {source}")]
    Session {
        session: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn format(format: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            format,
            reason: reason.into(),
        }
    }

    /// Wraps this error with the session index it occurred in.
    pub fn in_session(self, session: usize) -> Self {
        match self {
            e @ Error::Session { .. } => e,
            e => Error::Session {
                session,
                source: Box::new(e),
            },
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
