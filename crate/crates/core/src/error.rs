use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the GPA library.
#[derive(Debug, Error)]
pub enum GpaError {
    /// Inconsistent dimensions, out-of-range options or invalid parameters.
    #[error("configuration error: {0}")]
    Config(String),

    /// An argument outside the mathematical domain of a function.
    #[error("domain error: {0}")]
    Domain(String),

    /// Malformed or inconsistent input data.
    #[error("data error: {0}")]
    Data(String),

    /// Non-finite likelihoods or failed numerical procedures.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl GpaError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        GpaError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = GpaError> = std::result::Result<T, E>;
