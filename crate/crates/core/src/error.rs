use std::io;
use std::path::PathBuf;

/// Errors produced by the selection toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    Dimension(String),

    #[error("index ({row}, {col}) out of range for a {rows}x{cols} matrix")]
    Index {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },

    #[error("cannot write through a read-only handle ({0})")]
    ReadOnly(String),

    #[error("refusing to overwrite existing file {}", .0.display())]
    AlreadyExists(PathBuf),

    #[error("insufficient disk space for {}: need {needed} bytes, {available} available", path.display())]
    DiskFull {
        path: PathBuf,
        needed: u64,
        available: u64,
    },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("malformed file: {0}")]
    Format(String),

    #[error("column {0} is constant and cannot be standardized")]
    DegenerateColumn(usize),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("active Gram matrix is numerically singular for columns {0:?}")]
    SingularGram(Vec<usize>),

    #[error("reproducibility check failed: {0}")]
    Reproducibility(String),
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Storage,
    Reproducibility,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Dimension(_)
            | Error::Index { .. }
            | Error::ReadOnly(_)
            | Error::DegenerateColumn(_)
            | Error::Argument(_)
            | Error::SingularGram(_) => ErrorClass::Usage,
            Error::AlreadyExists(_) | Error::DiskFull { .. } | Error::Io { .. } | Error::Format(_) => {
                ErrorClass::Storage
            }
            Error::Reproducibility(_) => ErrorClass::Reproducibility,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
