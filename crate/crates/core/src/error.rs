use std::io;

use thiserror::Error;

/// Errors produced by every stage of the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error at record {record}: {source}")]
    Record {
        record: usize,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("input contract broken: {0}")]
    Contract(String),

    #[error("duplicate document id {0:?}")]
    DuplicateDoc(String),

    #[error("vocabulary mismatch: {0}")]
    VocabMismatch(String),

    #[error("malformed {what} at line {line}: {reason}")]
    Parse {
        what: &'static str,
        line: usize,
        reason: String,
    },

    #[error("bad binary format: {0}")]
    Format(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn parse(what: &'static str, line: usize, reason: impl ToString) -> Self {
        Error::Parse {
            what,
            line,
            reason: reason.to_string(),
        }
    }
}
