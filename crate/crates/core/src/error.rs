use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("malformed stream document: {0}")]
    MalformedStream(String),
    #[error("segment {index}: {reason}")]
    InvalidSegment { index: usize, reason: String },

    #[error("invalid position coordinate: {0}")]
    InvalidCoord(String),
    #[error("invalid stride {0}: visual stride must be 1/2^k with k <= 8")]
    InvalidStride(String),
    #[error("dynamic stride schedule has {have} entries but the video has {need} frames")]
    ScheduleTooShort { have: usize, need: usize },
    #[error("circle radius must be positive and finite, got {0}")]
    InvalidRadius(f64),
    #[error("unknown design `{0}` (valid: {valid})", valid = crate::position::Design::NAMES.join(", "))]
    UnknownDesign(String),

    #[error("head dimension must be even and >= 2, got {0}")]
    InvalidDimension(usize),
    #[error("rotary base must be finite and > 1, got {0}")]
    InvalidBase(f64),
    #[error("ratio {ratio:?} does not sum to {expected}")]
    BadRatio { ratio: [usize; 3], expected: usize },
    #[error("invalid head layout: {0}")]
    InvalidHeads(String),
    #[error("invalid extrapolation: {0}")]
    InvalidExtrapolation(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite vector component at index {0}")]
    NonFinite(usize),
    #[error("token index {index} out of range for layout of {len} tokens")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("layout/spec mismatch: {0}")]
    LayoutMismatch(String),
    #[error("axis {0} has no frequencies in this allocation")]
    AxisAbsent(crate::freq::Axis),

    #[error("attention matrix: {0}")]
    InvalidMatrix(String),
}
