//! Error types shared across the engine.

use thiserror::Error;

/// Errors from distance functions and codecs.
#[derive(Debug, Error)]
pub enum MetricError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("payload kind mismatch: expected {expected}, got {got}")]
    KindMismatch {
        expected: &'static str,
        got: &'static str,
    },
    #[error("unknown metric name: {0}")]
    UnknownMetric(String),
    #[error("metric {metric} does not support {operation}")]
    Unsupported {
        metric: &'static str,
        operation: &'static str,
    },
}

/// Errors from encoding/decoding deltas.
#[derive(Debug, Error)]
pub enum CodecError {
    #[error("truncated encoding at byte {offset}")]
    Truncated { offset: usize },
    #[error("unknown encoding kind tag {0}")]
    UnknownKind(u8),
    #[error("varint overflow at byte {offset}")]
    VarintOverflow { offset: usize },
    #[error("edit position {position} out of bounds (sequence length {length})")]
    EditOutOfBounds { position: usize, length: usize },
    #[error("encoding kind {got} cannot be applied to this payload")]
    WrongKind { got: &'static str },
}

/// Errors from tree construction.
#[derive(Debug, Error)]
pub enum TreeError {
    #[error("empty point list")]
    EmptyInput,
    #[error("operation requires cardinality >= {required}, got {got}")]
    TooFewPoints { required: usize, got: usize },
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Errors from the on-disk index.
#[derive(Debug, Error)]
pub enum StoreError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic: not an index file")]
    BadMagic,
    #[error("unsupported index version {0}")]
    BadVersion(u16),
    #[error("unsupported metric name in index: {0}")]
    UnsupportedMetric(String),
    #[error("corrupt index: {detail} (node {node})")]
    Integrity { node: usize, detail: String },
    #[error("corrupt encoding in node {node}: {source}")]
    Codec { node: usize, source: CodecError },
    #[error("node index {0} out of range")]
    NodeOutOfRange(usize),
}

/// Errors from query execution.
#[derive(Debug, Error)]
pub enum SearchError {
    #[error("query payload incompatible with index: {0}")]
    MetricMismatch(String),
    #[error("repeated rho-NN is not supported under {metric}: radius growth breaks down on set distances")]
    UnsupportedAlgorithm { metric: String },
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Errors from dataset parsing.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{path}:{line}: {detail}")]
    Malformed {
        path: String,
        line: usize,
        detail: String,
    },
    #[error("holdout count {count} must be smaller than dataset size {size}")]
    HoldoutTooLarge { count: usize, size: usize },
}
