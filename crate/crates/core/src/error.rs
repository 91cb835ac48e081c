use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch, expected {expected}, found {found}")]
    ShapeMismatch {
        op: &'static str,
        expected: String,
        found: String,
    },

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("{what} is not normalized: total {total} (tolerance {tolerance})")]
    NotNormalized {
        what: &'static str,
        total: f64,
        tolerance: f64,
    },

    #[error("invalid target matrix: {0}")]
    InvalidTarget(String),

    #[error("invalid box {0:?}: expected x1 < x2 and y1 < y2")]
    InvalidBox([f64; 4]),

    #[error("entity set has no boxes")]
    MissingBoxes,

    #[error("unknown lexical category `{0}`")]
    UnknownCategory(String),

    #[error("invalid argument `{arg}`: {reason}")]
    InvalidArgument { arg: &'static str, reason: String },

    #[error("invalid field `{field}`: {reason}")]
    InvalidField { field: String, reason: String },

    #[error("training diverged at epoch {epoch}, step {step}: {quantity} = {value}")]
    Divergence {
        epoch: usize,
        step: usize,
        quantity: &'static str,
        value: f64,
    },

    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("ablation cell {cell}: {source}")]
    Cell { cell: String, source: Box<Error> },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_mismatch(
    op: &'static str,
    expected: (usize, usize),
    found: (usize, usize),
) -> Error {
    Error::ShapeMismatch {
        op,
        expected: format!("{}x{}", expected.0, expected.1),
        found: format!("{}x{}", found.0, found.1),
    }
}

pub(crate) fn invalid_field(field: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::InvalidField {
        field: field.into(),
        reason: reason.into(),
    }
}
