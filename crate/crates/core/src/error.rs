use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    #[error("empty attention support")]
    EmptyAttentionSupport,

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("empty utterance")]
    EmptyUtterance,

    #[error("empty input")]
    EmptyInput,

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: duplicate record (first seen at line {first_line})")]
    DuplicateRecord {
        path: String,
        line: usize,
        first_line: usize,
    },

    #[error("embedding dimension mismatch: expected {expected}, found {found} at line {line}")]
    DimMismatch {
        expected: usize,
        found: usize,
        line: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("checkpoint file is truncated")]
    Truncated,

    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("checkpoint checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    Checksum { stored: u32, computed: u32 },

    #[error(
        "corpus/checkpoint mismatch: checkpoint fingerprint {expected:016x}, corpus {found:016x}"
    )]
    FingerprintMismatch { expected: u64, found: u64 },

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
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
