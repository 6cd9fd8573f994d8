use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("cannot step an episode that has already terminated")]
    EpisodeTerminated,

    #[error("objective failed for direction {direction} ({sign}): {source}")]
    Objective {
        direction: usize,
        sign: char,
        #[source]
        source: Box<Error>,
    },

    #[error("corrupt checkpoint {}: {reason}", file.display())]
    CorruptCheckpoint { file: PathBuf, reason: String },

    #[error("checkpoint version mismatch: file has format_version {found}, this build reads {expected}")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("csv schema violation in {schema}: {reason}")]
    Schema { schema: String, reason: String },

    #[error("i/o error on {}: {source}", file.display())]
    Io {
        file: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn dim(context: impl Into<String>, expected: usize, actual: usize) -> Self {
        Error::Dimension {
            context: context.into(),
            expected,
            actual,
        }
    }

    pub(crate) fn io(file: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            file: file.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
