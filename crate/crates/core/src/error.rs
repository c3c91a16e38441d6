use std::path::PathBuf;

use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed audio file: {0}")]
    Format(String),
    #[error("unsupported audio encoding: {0}")]
    Unsupported(String),
    #[error("no audio samples: {0}")]
    Empty(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error("no onset found: clip is silent")]
    NoOnset,
    #[error("segment is silent (rms {rms:e})")]
    SilentSegment { rms: f64 },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("stale state: {0}")]
    State(String),
    #[error("incompatible configuration: {0}")]
    Compatibility(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps the error with a human-readable context, e.g. the file being processed.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping any context layers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}
