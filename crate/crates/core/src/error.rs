use alloc::string::String;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("{op}: extent {extent} is not divisible by {divisor}{hint}")]
    Divisibility {
        op: &'static str,
        extent: usize,
        divisor: usize,
        hint: String,
    },
    #[error("axis {axis} out of range for rank {rank}")]
    Axis { axis: usize, rank: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("backward called on a tape that was already consumed")]
    StaleTape,
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("chunk order violation: expected {expected} decoded chunks, got {got}")]
    ChunkOrder { expected: usize, got: usize },
    #[error("symbol/cdf count mismatch: {symbols} symbols, {cdfs} tables")]
    CdfCount { symbols: usize, cdfs: usize },
    #[error("corrupt stream: {0}")]
    Corrupt(&'static str),
    #[error("model mismatch: stream was produced by {stream:016x}, model is {model:016x}")]
    ModelMismatch { stream: u64, model: u64 },
    #[error("image {height}x{width} exceeds limit {limit}")]
    Oversize {
        height: usize,
        width: usize,
        limit: usize,
    },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn shape_err(op: &'static str, detail: String) -> Error {
    Error::Shape { op, detail }
}
