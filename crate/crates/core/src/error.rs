use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent caller input.
    #[error("invalid input: {0}")]
    Input(String),

    /// Matrix dimensions do not agree for the requested operation.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A row or column with zero mass where normalization needs a positive one.
    #[error("degenerate matrix: {0}")]
    Degenerate(String),

    /// Sinkhorn-Knopp hit its iteration cap. A persistent failure here means
    /// the matrix lacks total support.
    #[error("balancing did not converge after {iterations} iterations (max deviation {max_deviation:e})")]
    NotConverged {
        iterations: usize,
        max_deviation: f64,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn input_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}
