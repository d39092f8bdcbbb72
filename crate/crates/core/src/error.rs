use std::path::PathBuf;

/// Errors produced anywhere in the retrieval engine.
#[derive(Debug, thiserror::Error)]
pub enum TsrError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("shape {0} has no foreground pixels")]
    EmptyShape(String),
    #[error("corrupt file: {0}")]
    CorruptFile(String),
    #[error("no decodable images in {0}")]
    EmptyDirectory(PathBuf),
    #[error("{} file(s) failed to load, first: {}", .0.len(), .0.first().map(|(p, e)| format!("{p}: {e}")).unwrap_or_default())]
    PartialLoad(Vec<(String, String)>),
    #[error("index format version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("checksum failure in section {0}")]
    ChecksumFailure(String),
    #[error("degenerate shape: {0}")]
    DegenerateShape(String),
    #[error("contour has {available} pixels, {requested} samples requested")]
    TooFewContourPixels { available: usize, requested: usize },
    #[error("sample point {0} is not reachable inside the shape")]
    DisconnectedInterior(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid cluster count {m} for {n} shapes")]
    InvalidM { m: usize, n: usize },
    #[error("eigen-solver did not converge")]
    EigenFailure,
    #[error("training set has a single class")]
    SingleClassTraining,
    #[error("non-finite feature value at sample {sample}, dimension {dim}")]
    NonFiniteFeature { sample: usize, dim: usize },
    #[error("gallery is empty")]
    EmptyGallery,
    #[error("ranking for query {query} has {len} entries, {needed} needed")]
    RankingTooShort {
        query: usize,
        len: usize,
        needed: usize,
    },
    #[error("incompatible index: {0}")]
    IncompatibleIndex(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, TsrError>;

impl TsrError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        TsrError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input data rather than a bug or
    /// numerical breakdown.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, TsrError::EigenFailure)
    }
}
