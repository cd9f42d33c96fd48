use std::path::PathBuf;

use thiserror::Error;

/// Unified error type for the whole pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    ManifestParse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {message}")]
    ImageDecode { path: PathBuf, message: String },

    #[error("{path}: expected a 3-channel image, found {found} channel(s)")]
    ChannelCount { path: PathBuf, found: u32 },

    #[error("crop box {x},{y} {w}x{h} exceeds image bounds {width}x{height}")]
    CropOutOfBounds {
        x: u32,
        y: u32,
        w: u32,
        h: u32,
        width: u32,
        height: u32,
    },

    #[error("invalid filter bank: {0}")]
    FilterBank(String),

    #[error("filter learning failed: {0}")]
    Ica(String),

    #[error("{path}: {message}")]
    BankFile { path: PathBuf, message: String },

    #[error("image {width}x{height} too small: needs at least {needed}x{needed}")]
    ImageTooSmall {
        width: usize,
        height: usize,
        needed: usize,
    },

    #[error("patch at ({x},{y}) radius {radius} exceeds code image bounds {width}x{height}")]
    PatchOutOfBounds {
        x: usize,
        y: usize,
        radius: usize,
        width: usize,
        height: usize,
    },

    #[error("histogram length {len} is not a power of two")]
    NotPowerOfTwo { len: usize },

    #[error("not enough samples: have {have}, need at least {need}")]
    InsufficientSamples { have: usize, need: usize },

    #[error("sample covariance rank {achieved} is below the requested {requested} components")]
    RankDeficient { achieved: usize, requested: usize },

    #[error("{context}: expected dimension {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("training data contains a single class; need both bona fide and attack samples")]
    SingleClass,

    #[error("score set has no {0} scores")]
    EmptyScores(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("{path}: {message}")]
    Bundle { path: PathBuf, message: String },

    #[error("protocol error: {0}")]
    Protocol(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
