use super::RealMatrix;
use crate::error::{shape_mismatch, Result};

/// Softmax over each row independently, stabilized by subtracting the row max.
pub fn softmax_rows(m: &RealMatrix) -> RealMatrix {
    let (rows, cols) = m.shape();
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let row = m.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let start = out.len();
        out.extend(row.iter().map(|v| (v - max).exp()));
        let total: f64 = out[start..].iter().sum();
        for v in &mut out[start..] {
            *v /= total;
        }
    }
    RealMatrix::from_raw(rows, cols, out)
}

/// Softmax over each column independently (every column sums to one).
pub fn softmax_cols(m: &RealMatrix) -> RealMatrix {
    softmax_rows(&m.transpose()).transpose()
}

/// Softmax over all entries at once: the output is a single distribution
/// over every (row, col) cell.
pub fn softmax_matrix(m: &RealMatrix) -> RealMatrix {
    let max = m.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = m.data().iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    RealMatrix::from_raw(m.rows(), m.cols(), exps.into_iter().map(|e| e / total).collect())
}

/// Vector-Jacobian product of [`softmax_rows`]: given the softmax output `s`
/// and upstream gradient `g`, returns the gradient w.r.t. the logits.
pub fn softmax_rows_backward(s: &RealMatrix, g: &RealMatrix) -> Result<RealMatrix> {
    if s.shape() != g.shape() {
        return Err(shape_mismatch("softmax_rows_backward", s.shape(), g.shape()));
    }
    let (rows, cols) = s.shape();
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let (sr, gr) = (s.row(r), g.row(r));
        let inner: f64 = sr.iter().zip(gr).map(|(a, b)| a * b).sum();
        out.extend(sr.iter().zip(gr).map(|(a, b)| a * (b - inner)));
    }
    Ok(RealMatrix::from_raw(rows, cols, out))
}

/// Vector-Jacobian product of [`softmax_cols`].
pub fn softmax_cols_backward(s: &RealMatrix, g: &RealMatrix) -> Result<RealMatrix> {
    if s.shape() != g.shape() {
        return Err(shape_mismatch("softmax_cols_backward", s.shape(), g.shape()));
    }
    Ok(softmax_rows_backward(&s.transpose(), &g.transpose())?.transpose())
}

/// Vector-Jacobian product of [`softmax_matrix`].
pub fn softmax_matrix_backward(s: &RealMatrix, g: &RealMatrix) -> Result<RealMatrix> {
    if s.shape() != g.shape() {
        return Err(shape_mismatch("softmax_matrix_backward", s.shape(), g.shape()));
    }
    let inner: f64 = s.data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
    let data = s
        .data()
        .iter()
        .zip(g.data())
        .map(|(a, b)| a * (b - inner))
        .collect();
    Ok(RealMatrix::from_raw(s.rows(), s.cols(), data))
}

/// `log(max(x, eps))`.
#[inline]
pub fn stable_log(x: f64, eps: f64) -> f64 {
    x.max(eps).ln()
}
