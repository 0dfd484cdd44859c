use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: bad magic bytes, expected FEAT1\\0")]
    BadMagic { path: PathBuf },
    #[error("{path}: truncated matrix, expected {expected} payload bytes, found {found}")]
    Truncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("row count mismatch: matrix has {matrix} rows, metadata has {meta}")]
    RowCountMismatch { matrix: usize, meta: usize },
    #[error("metadata error: {0}")]
    Metadata(String),
    #[error("pid set is not contiguous: pid {pid} is outside 0..{num_ids}")]
    NonContiguousPid { pid: u32, num_ids: usize },
    #[error("invalid feature set: {0}")]
    InvalidFeatureSet(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("unknown pid {0}")]
    UnknownPid(u32),
    #[error("class {0} has no samples")]
    EmptyClass(u32),
    #[error("pid {pid} occurs {count} time(s) in the batch, need at least 2")]
    DegenerateBatch { pid: u32, count: usize },
    #[error("no valid queries: every query lacks a cross-camera match in the gallery")]
    NoValidQueries,
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
