use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the estimator, training and I/O layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("enumeration refused: n = {n} exceeds the guard of {limit}")]
    EnumerationTooLarge { n: usize, limit: usize },

    #[error("non-finite loss at step {step}: {detail}")]
    NonFinite { step: u64, detail: String },

    #[error("undefined cosine similarity: exact gradient has zero norm")]
    ZeroExactGradient,

    #[error("empty dataset")]
    EmptyDataset,

    #[error(transparent)]
    Idx(#[from] IdxError),

    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),

    #[error("metrics file {0} is already held by another writer")]
    WriterBusy(PathBuf),

    #[error("metrics file {path} has an unexpected header")]
    MetricsHeader { path: PathBuf },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Malformed IDX containers. Each corruption mode has its own variant.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum IdxError {
    #[error("file shorter than the {0}-byte header")]
    ShortHeader(usize),
    #[error("bad magic number 0x{0:08x}")]
    BadMagic(u32),
    #[error("unsupported element type 0x{0:02x}")]
    BadElementType(u8),
    #[error("unexpected dimension count {got} (expected {expected})")]
    BadRank { got: u8, expected: u8 },
    #[error("dimension product overflows")]
    DimensionOverflow,
    #[error("image dimensions {rows}x{cols} (expected 28x28)")]
    BadImageSize { rows: u32, cols: u32 },
    #[error("zero items")]
    Empty,
    #[error("payload truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CheckpointError {
    #[error("bad checkpoint magic")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint truncated")]
    Truncated,
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
