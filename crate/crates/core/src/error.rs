use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Decode { path: PathBuf, message: String },

    #[error("{path}: unsupported bit depth {depth}")]
    UnsupportedBitDepth { path: PathBuf, depth: u8 },

    #[error("{path}: unsupported color type {color}")]
    UnsupportedColorType { path: PathBuf, color: String },

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("label {label} out of range (declared count {count})")]
    LabelOutOfRange { label: u32, count: usize },

    #[error("empty manifest")]
    EmptyManifest,

    #[error("{path}:{line}: {message}")]
    Manifest {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("bad magic in {0}")]
    BadMagic(String),

    #[error("version mismatch: expected {expected}, found {found}")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },

    #[error("duplicate key ({0}, {1})")]
    DuplicateKey(u32, u32),

    #[error("keys not sorted at ({0}, {1})")]
    UnsortedKeys(u32, u32),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("inconsistent primitive stats: {0}")]
    InconsistentStats(String),

    #[error("unknown primitive {0}")]
    UnknownPrimitive(u32),

    #[error("missing concept label for primitive {0}")]
    MissingConcept(u32),

    #[error("not enough points: N = {n} < K = {k}")]
    TooFewPoints { n: usize, k: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("no evaluated pixels")]
    EmptyEvaluation,

    #[error("stage `{stage}`: {message} ({path})")]
    Stage {
        stage: &'static str,
        path: PathBuf,
        message: String,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
