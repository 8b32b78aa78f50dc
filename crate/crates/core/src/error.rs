use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch, {lhs} vs {rhs}")]
    Shape {
        op: &'static str,
        lhs: String,
        rhs: String,
    },

    #[error("{op}: extent {extent} along {axis} is not divisible by {divisor}")]
    Divisibility {
        op: &'static str,
        axis: &'static str,
        extent: usize,
        divisor: usize,
    },

    #[error("{op}: unsupported stride {stride:?}, each component must be 1 or 2")]
    Stride { op: &'static str, stride: (usize, usize) },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parameter `{0}` has no gradient")]
    MissingGradient(String),

    #[error("{0}: input has zero total mass")]
    ZeroMass(&'static str),

    #[error("reference effectively zero: every bin is below the masking threshold")]
    ReferenceZero,

    #[error("negative value {value} at index {index}")]
    NegativeValue { index: usize, value: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad magic at offset 0: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },

    #[error("unsupported format version: expected {expected:?}, found {found:?}")]
    Version { expected: String, found: String },

    #[error("truncated {what} at offset {offset}: need {needed} bytes, {available} available")]
    Truncated {
        what: &'static str,
        offset: u64,
        needed: u64,
        available: u64,
    },

    #[error("dimension overflow at offset {offset}: dims {dims:?} exceed file size {file_len}")]
    DimOverflow {
        offset: u64,
        dims: Vec<u64>,
        file_len: u64,
    },

    #[error("malformed {what} at offset {offset}: {detail}")]
    Malformed {
        what: &'static str,
        offset: u64,
        detail: String,
    },

    #[error("length mismatch: expected {expected} bytes, found {actual} bytes")]
    LengthMismatch { expected: u64, actual: u64 },

    #[error("checkpoint does not match configuration: {0}")]
    CheckpointMismatch(String),

    #[error("manifest: {0}")]
    Manifest(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Shape {
            op,
            lhs: format!("{lhs:?}"),
            rhs: format!("{rhs:?}"),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the caller's data or arguments rather than by a
    /// defect in this crate.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::Internal(_))
    }
}
