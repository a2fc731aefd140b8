use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected_h}x{expected_w}, got {got_h}x{got_w}")]
    DimensionMismatch {
        expected_h: usize,
        expected_w: usize,
        got_h: usize,
        got_w: usize,
    },

    #[error("non-finite value at ({row}, {col})")]
    NonFiniteValue { row: usize, col: usize },

    #[error("value {value} at ({row}, {col}) outside [0, 1]")]
    OutOfRangeValue { row: usize, col: usize, value: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("kernel size must be odd and at least 3, got {0}")]
    InvalidKernelSize(usize),

    #[error("kernel size mismatch: field has {field}, config has {config}")]
    KernelSizeMismatch { field: usize, config: usize },

    #[error("boundary policy mismatch between kernel field and config")]
    BoundaryMismatch,

    #[error("invalid kernel weights at ({row}, {col}): {reason}")]
    InvalidKernel {
        row: usize,
        col: usize,
        reason: &'static str,
    },

    #[error("grid of {cells} cells exceeds the dense-matrix limit of {limit}")]
    GridTooLarge { cells: usize, limit: usize },

    #[error("grid {height}x{width} too small, at least {min}x{min} required")]
    GridTooSmall { height: usize, width: usize, min: usize },

    #[error("anchor ({row}, {col}) out of bounds")]
    AnchorOutOfBounds { row: usize, col: usize },

    #[error("duplicate anchor at ({row}, {col})")]
    DuplicateAnchor { row: usize, col: usize },

    #[error("anchor depth at ({row}, {col}) must be positive and finite, got {value}")]
    InvalidAnchorDepth { row: usize, col: usize, value: f64 },

    #[error("no valid pixels to evaluate")]
    EmptyValidSet,

    #[error("ground truth must be positive on valid pixels, got {value} at ({row}, {col})")]
    NonPositiveGroundTruth { row: usize, col: usize, value: f64 },

    #[error("requested {requested} samples but only {available} valid pixels")]
    CountExceedsValidPixels { requested: usize, available: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn dims(expected: (usize, usize), got: (usize, usize)) -> Self {
        Error::DimensionMismatch {
            expected_h: expected.0,
            expected_w: expected.1,
            got_h: got.0,
            got_w: got.1,
        }
    }

    pub(crate) fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }
}
