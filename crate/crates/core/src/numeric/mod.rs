//! Dense row-major matrices and numerically stable softmax/log primitives.

mod matrix;
mod softmax;

pub use matrix::RealMatrix;
pub use softmax::{
    softmax_cols, softmax_cols_backward, softmax_matrix, softmax_matrix_backward, softmax_rows,
    softmax_rows_backward, stable_log,
};

/// Log guard used when no configuration overrides it.
pub const DEFAULT_LOG_EPS: f64 = 1e-12;
