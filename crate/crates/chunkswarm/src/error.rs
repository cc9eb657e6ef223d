use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("chunk count {0} out of range (must be 1..={max})", max = crate::labels::MAX_CHUNKS)]
    ChunkCountOutOfRange(u8),

    #[error("labels defined over different chunk counts: {left} vs {right}")]
    ChunkCountMismatch { left: u8, right: u8 },

    #[error("chunk index {index} invalid for n = {n} (valid: 1..={n})")]
    InvalidChunkIndex { index: u32, n: u8 },

    #[error("cannot parse label {0:?} (expected e.g. \"{{}}\" or \"{{1,3}}\")")]
    LabelParse(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("state vector has length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("negative entry {value} at label index {index}")]
    NegativeEntry { index: usize, value: f64 },

    #[error(
        "swap-enabled jump set for n = {0} exceeds the builder limit (n <= {limit}); \
         use build_unrestricted to override",
        limit = crate::model::JUMP_SET_MAX_SWAP_CHUNKS
    )]
    JumpSetTooLarge(u8),

    #[error("step size underflow at t = {t} (h = {h})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("step limit {0} exceeded before reaching the horizon")]
    StepLimitExceeded(usize),

    #[error("state entry fell to {min} at t = {t}, below the negativity tolerance")]
    NegativityExceeded { t: f64, min: f64 },

    #[error("no convergence after {iterations} iterations (residual {residual})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("no sign change found while expanding the root bracket up to {0}")]
    BracketFailure(f64),

    #[error("settling upper bound inapplicable: v_plus_bar = {v_plus_bar} >= delta = {delta}")]
    BoundInapplicable { v_plus_bar: f64, delta: f64 },

    #[error("{0}")]
    SymmetryViolation(String),

    #[error("insufficient data: {got} samples, need at least {needed}")]
    InsufficientData { needed: usize, got: usize },

    #[error("improvement predicate already false as lambda -> 0 (q(u~) = {0} at the smallest tested lambda)")]
    NoImprovementAtZero(f64),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
