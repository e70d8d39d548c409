use thiserror::Error;

/// Errors raised by the statistical routines and the data layer.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty design")]
    EmptyDesign,

    #[error("repeated index in tuple {0:?}")]
    RepeatedIndex(Vec<usize>),

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("covariance factorization failed after jitter")]
    Factorization,

    #[error("insufficient scales: {usable} usable points, need at least 3")]
    InsufficientScales { usable: usize },

    #[error("feature {0} has zero variance")]
    DegenerateFeature(usize),

    #[error("data error: {0}")]
    Data(String),
}

pub type Result<T> = std::result::Result<T, Error>;
