use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("convex hull has no generators")]
    EmptyHull,

    #[error("index {index} out of range for {len} vectors")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("vector {index} lies within {distance:e} of the hull of the others")]
    DegenerateResidual { index: usize, distance: f64 },

    #[error("invalid shape d={dim}, K={count}: {reason}")]
    InvalidShape {
        dim: usize,
        count: usize,
        reason: String,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("class {0} has a zero-norm vector")]
    ZeroNormClass(usize),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite loss at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
