use std::path::PathBuf;

/// Failures while decoding a FEAT1 archive. Every variant carries the byte
/// offset at which decoding stopped.
#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum ArchiveError {
    #[error("bad magic at byte {offset}: expected \"AUDF\"")]
    BadMagic { offset: usize },
    #[error("unsupported archive version {version} at byte {offset}")]
    UnsupportedVersion { offset: usize, version: u32 },
    #[error("truncated payload at byte {offset}: needed {needed} more bytes")]
    Truncated { offset: usize, needed: usize },
    #[error("utterance id at byte {offset} is not valid UTF-8")]
    InvalidId { offset: usize },
    #[error("duplicate utterance id {id:?} at byte {offset}")]
    DuplicateId { offset: usize, id: String },
    #[error("dim mismatch at byte {offset}: utterance {id:?} has dim {found}, expected {expected}")]
    DimMismatch {
        offset: usize,
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("utterance {id:?} at byte {offset} has zero frames")]
    EmptyUtterance { offset: usize, id: String },
    #[error("{trailing} trailing bytes after last utterance at byte {offset}")]
    TrailingBytes { offset: usize, trailing: usize },
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Archive {
        path: PathBuf,
        #[source]
        source: ArchiveError,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("within-class scatter is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("unsupported {what} version {found} (expected {expected})")]
    Version {
        what: &'static str,
        found: u32,
        expected: u32,
    },
    #[error("corrupt {what}: {message}")]
    Corrupt { what: &'static str, message: String },
}

/// Coarse classification used by front ends to pick exit statuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Io,
    Validation,
    Numeric,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. }
            | Error::Archive { .. }
            | Error::Parse { .. }
            | Error::Version { .. }
            | Error::Corrupt { .. } => ErrorKind::Io,
            Error::DimMismatch { .. } | Error::Shape(_) | Error::Invalid(_) => {
                ErrorKind::Validation
            }
            Error::NonFinite(_) | Error::NotPositiveDefinite { .. } => ErrorKind::Numeric,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
