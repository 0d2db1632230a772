use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid unfolding mode {0}; expected 1, 2 or 3")]
    InvalidMode(usize),

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("invalid dimensions: {0}")]
    InvalidDims(String),

    #[error("transform of order {order} cannot act on {days} days")]
    OrderMismatch { order: usize, days: usize },

    #[error("numeric breakdown{}: {reason}", slice.map(|j| format!(" in slice {j}")).unwrap_or_default())]
    NumericBreakdown { slice: Option<usize>, reason: String },

    #[error("non-finite values appeared at iteration {iteration}")]
    NonFinite { iteration: usize },

    #[error("observation mask is empty; nothing to complete from")]
    EmptyMask,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("mask split left the {0} set empty")]
    EmptySplit(&'static str),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
