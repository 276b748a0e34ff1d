use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape {shape:?} holds {expected} elements but {got} values were given")]
    Construction {
        shape: Vec<usize>,
        expected: usize,
        got: usize,
    },

    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("domain error in {op}: input {value} is not strictly positive")]
    Domain { op: &'static str, value: f64 },

    #[error("axis {axis} is out of range for rank {rank}")]
    InvalidAxis { axis: usize, rank: usize },

    #[error("backward: {0}")]
    Backward(String),

    #[error("label {label} out of range for {n} classes")]
    LabelOutOfRange { label: usize, n: usize },

    #[error("invalid value for `{field}`: {reason}")]
    InvalidParam { field: String, reason: String },

    #[error("empty input to {0}")]
    Empty(&'static str),

    #[error("fusion: {0}")]
    Fusion(String),

    #[error("additive fusion undefined across score grids (G = {0} vs G = {1})")]
    AdditiveGridMismatch(usize, usize),

    #[error("numerical abort: {0}")]
    NumericalAbort(String),

    #[error("format: {0}")]
    Format(String),

    #[error(transparent)]
    Idx(#[from] IdxError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn param(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParam {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// True for failures caused by numerics (NaN/Inf) rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonFinite(_) | Error::NumericalAbort(_))
    }
}

/// Failures while reading IDX archives.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum IdxError {
    #[error("{file}: bad magic 0x{found:08x}, expected 0x{expected:08x}")]
    BadMagic { file: String, found: u32, expected: u32 },

    #[error("{file}: truncated, expected {expected} bytes but found {found}")]
    Truncated {
        file: String,
        expected: usize,
        found: usize,
    },

    #[error("image file holds {images} items but label file holds {labels}")]
    CountMismatch { images: usize, labels: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
