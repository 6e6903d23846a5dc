use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by fallible operations.
///
/// Shape mismatches in the numerical hot path (`matvec`, `forward`) are
/// treated as programmer error and panic via `assert!` instead.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset is empty")]
    EmptyDataset,

    #[error("dataset dimensions are inconsistent")]
    InconsistentDataset,

    #[error("gauge scale s[{index}] = {value} is not strictly positive")]
    NonPositiveScale { index: usize, value: f64 },

    #[error("update diverged: non-finite gradient or loss")]
    Diverged,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
