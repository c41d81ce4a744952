use std::path::PathBuf;

/// Errors raised by the lab.
#[derive(Debug, thiserror::Error)]
pub enum LabError {
    /// An argument violated an operation's precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A token index fell outside the vocabulary.
    #[error("token {token} out of range for vocabulary of size {vocab_size}")]
    TokenOutOfRange { token: usize, vocab_size: usize },

    /// Input that is well-formed but makes the requested quantity undefined
    /// (zero-probability samples, degenerate supports).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A malformed line in a JSON-lines or plain-text data file.
    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// A requested record index is beyond the end of a file.
    #[error("{path}: record {index} requested but file has {count} records")]
    RecordOutOfRange {
        path: PathBuf,
        index: usize,
        count: usize,
    },

    /// Invalid experiment configuration.
    #[error("config error: {0}")]
    Config(String),

    /// A numerical routine found its own invariants violated.
    #[error("internal consistency error: {0}")]
    Internal(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl LabError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        LabError::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LabError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
