//! Error type shared by all pipeline stages.

use std::path::PathBuf;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A row in an input file could not be parsed. Carries enough context to
    /// point at the offending cell.
    #[error("{file}:{line}: column '{column}': {message}")]
    Parse {
        file: String,
        line: u64,
        column: String,
        message: String,
    },

    /// Semantically invalid data (unknown parcel, duplicate record, value out
    /// of range, empty target set, ...).
    #[error("data error: {0}")]
    Data(String),

    /// Numerical failure: singular system, divergent loss, NaN in a forward
    /// pass, failed gradient check.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Invalid configuration.
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(
        file: &str,
        line: u64,
        column: &str,
        message: impl Into<String>,
    ) -> Self {
        Error::Parse {
            file: file.to_string(),
            line,
            column: column.to_string(),
            message: message.into(),
        }
    }
}
