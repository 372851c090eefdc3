use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input file; `line` is 1-based and counts the header.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },

    /// A reference to a player, game or column that does not exist.
    #[error("data error: {0}")]
    Data(String),

    /// Input is well-formed but violates a precondition.
    #[error("validation error: {0}")]
    Validation(String),

    /// Non-finite values produced during fitting.
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("cross-validation failed on fold {fold} at lambda=({lambda1}, {lambda2}): {source}")]
    CvTask {
        fold: usize,
        lambda1: f64,
        lambda2: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(path: &std::path::Path, line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.display().to_string(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// True for errors caused by bad input files or arguments rather than by
    /// the numerics.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::Parse { .. } | Error::Data(_) | Error::Validation(_) | Error::Io { .. } => true,
            Error::Numeric(_) => false,
            Error::CvTask { source, .. } => source.is_input_error(),
        }
    }
}
