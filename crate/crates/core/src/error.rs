//! Shared error type for the whole crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("duplicate id {0}")]
    DuplicateId(u64),

    #[error("dimension mismatch at level {level}: expected {expected}, got {got}")]
    DimMismatch {
        level: usize,
        expected: usize,
        got: usize,
    },

    #[error("non-finite component in item {id} at level {level}")]
    NonFinite { id: u64, level: usize },

    #[error("io failure: {0}")]
    Io(#[from] std::io::Error),

    #[error("bad magic bytes (not a gallery store file)")]
    BadMagic,

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),

    #[error("truncated file")]
    TruncatedFile,

    #[error("checksum mismatch (file corrupted)")]
    ChecksumMismatch,

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("degenerate batch: in-batch negatives need n >= 2, got {0}")]
    DegenerateBatch(usize),

    #[error("unknown id {0}")]
    UnknownId(u64),

    #[error("level {level} out of range for {levels}-level schedule")]
    LevelOutOfRange { level: usize, levels: usize },

    #[error("schedule mismatch: {0}")]
    ScheduleMismatch(String),

    #[error("empty gallery")]
    EmptyGallery,

    #[error("empty input")]
    EmptyInput,

    #[error("non-finite loss value")]
    NonFiniteLoss,

    #[error("training diverged at epoch {0} (loss is NaN/Inf)")]
    DivergenceDetected(usize),

    #[error("missing ground truth for query {0}")]
    MissingGroundTruth(u64),

    #[error("invalid config: {0}")]
    InvalidConfig(String),
}
