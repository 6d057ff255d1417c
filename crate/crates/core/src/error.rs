use std::path::PathBuf;

use thiserror::Error;

/// Unified error type for the crate.
///
/// Variants are grouped by pipeline stage so callers (notably the CLI) can
/// distinguish input/validation problems from runtime failures.
#[derive(Debug, Error)]
pub enum PgdError {
    /// A line in an input file could not be parsed.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// An input file or directory could not be read or written.
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// The interaction set is empty.
    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    /// Cross-file references do not line up (e.g. an interacting entity is
    /// missing from its attribute file).
    #[error("inconsistent dataset: {0}")]
    Inconsistent(String),

    /// A requested split cannot be produced.
    #[error("invalid split: {0}")]
    Split(String),

    /// A configuration value is out of range or unknown.
    #[error("invalid config: {0}")]
    Config(String),

    /// Two objects that must agree on dimensions do not.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// An API precondition was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A gradient table contains NaN or infinity.
    #[error("non-finite gradient in table {table}")]
    NonFiniteGradient { table: &'static str },

    /// A checkpoint file is malformed or disagrees with expected dimensions.
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, PgdError>;

impl PgdError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PgdError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        PgdError::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
