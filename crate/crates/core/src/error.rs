use thiserror::Error;

/// Errors raised by model construction, inference, training and evaluation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid label assignment: {0}")]
    InvalidAssignment(String),

    #[error("factor index {index} out of range (graph has {count} factors)")]
    FactorOutOfRange { index: usize, count: usize },

    #[error("enumeration of {size} assignments exceeds the cap of {cap}")]
    EnumerationCap { size: u128, cap: u64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("graph is not a chain eligible for dynamic programming")]
    NotAChain,

    #[error("task loss `{0}` does not decompose over nodes")]
    NonDecomposableLoss(&'static str),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid Markov source: {0}")]
    InvalidSource(String),

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("all {0} draws were degenerate")]
    AllDegenerate(usize),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid_param(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
