use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{shape_mismatch, Error, Result};

/// Dense matrix of `f64` stored in row-major order.
///
/// Every constructor rejects empty shapes and non-finite entries, so a
/// `RealMatrix` in hand is always at least 1x1 and finite.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix", into = "RawMatrix")]
pub struct RealMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<RawMatrix> for RealMatrix {
    type Error = Error;

    fn try_from(raw: RawMatrix) -> Result<Self> {
        RealMatrix::new(raw.rows, raw.cols, raw.data)
    }
}

impl From<RealMatrix> for RawMatrix {
    fn from(m: RealMatrix) -> Self {
        RawMatrix {
            rows: m.rows,
            cols: m.cols,
            data: m.data,
        }
    }
}

impl fmt::Debug for RealMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "RealMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl RealMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidMatrix(format!(
                "shape {rows}x{cols} has an empty dimension"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::InvalidMatrix(format!(
                "shape {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidMatrix(format!(
                "non-finite entry {} at ({}, {})",
                data[pos],
                pos / cols,
                pos % cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
            return Err(Error::InvalidMatrix(format!(
                "row {bad} has {} columns, expected {cols}",
                rows[bad].len()
            )));
        }
        Self::new(n, cols, rows.concat())
    }

    /// Builds a matrix from `f(row, col)`. Panics on an empty shape.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(rows > 0 && cols > 0, "empty matrix shape {rows}x{cols}");
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        assert!(rows > 0 && cols > 0, "empty matrix shape {rows}x{cols}");
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |r, c| if r == c { 1.0 } else { 0.0 })
    }

    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|r| self.row(r).iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (acc, v) in out.iter_mut().zip(self.row(r)) {
                *acc += v;
            }
        }
        out
    }

    /// Mean over rows, one value per column.
    pub fn col_means(&self) -> Vec<f64> {
        let n = self.rows as f64;
        self.col_sums().into_iter().map(|s| s / n).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_raw(self.rows, self.cols, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn scale(&self, k: f64) -> Self {
        self.map(|v| v * k)
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    fn zip_with(
        &self,
        other: &Self,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(shape_mismatch(op, self.shape(), other.shape()));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Self::from_raw(self.rows, self.cols, data))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "hadamard", |a, b| a * b)
    }

    /// `self * other`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                expected: format!("{}xK with K = {}", other.rows, self.cols),
                found: format!("{}x{}", other.rows, other.cols),
            });
        }
        let mut out = vec![0.0; self.rows * other.cols];
        for r in 0..self.rows {
            let out_row = &mut out[r * other.cols..(r + 1) * other.cols];
            for (k, &a) in self.row(r).iter().enumerate() {
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(Self::from_raw(self.rows, other.cols, out))
    }

    /// `self * other^T`.
    pub fn matmul_t(&self, other: &Self) -> Result<Self> {
        if self.cols != other.cols {
            return Err(Error::ShapeMismatch {
                op: "matmul_t",
                expected: format!("Nx{}", self.cols),
                found: format!("{}x{}", other.rows, other.cols),
            });
        }
        Ok(Self::from_fn(self.rows, other.rows, |r, c| {
            dot(self.row(r), other.row(c))
        }))
    }

    /// `self^T * other`.
    pub fn t_matmul(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows {
            return Err(Error::ShapeMismatch {
                op: "t_matmul",
                expected: format!("{}xN", self.rows),
                found: format!("{}x{}", other.rows, other.cols),
            });
        }
        let mut out = vec![0.0; self.cols * other.cols];
        for k in 0..self.rows {
            for (i, &a) in self.row(k).iter().enumerate() {
                let out_row = &mut out[i * other.cols..(i + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(Self::from_raw(self.cols, other.cols, out))
    }

    /// Matrix-vector product `self * v`.
    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols {
            return Err(shape_mismatch("mul_vec", (self.cols, 1), (v.len(), 1)));
        }
        Ok((0..self.rows).map(|r| dot(self.row(r), v)).collect())
    }

    /// Returns a copy with rows reordered so that row `i` of the output is
    /// row `perm[i]` of `self`, and likewise for columns when `cols` is set.
    pub fn permuted(&self, perm: &[usize], cols: bool) -> Self {
        assert_eq!(perm.len(), self.rows);
        if cols {
            assert_eq!(perm.len(), self.cols);
        }
        Self::from_fn(self.rows, self.cols, |r, c| {
            let c = if cols { perm[c] } else { c };
            self.get(perm[r], c)
        })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes_and_values() {
        assert!(RealMatrix::new(0, 2, vec![]).is_err());
        assert!(RealMatrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(RealMatrix::new(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(RealMatrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn products_agree() {
        let a = RealMatrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        let b = RealMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![2.0, -1.0]]).unwrap();
        let ab = a.matmul(&b).unwrap();
        assert_eq!(ab.to_rows(), vec![vec![7.0, -1.0], vec![16.0, -1.0]]);
        assert_eq!(a.matmul_t(&b.transpose()).unwrap(), ab);
        assert_eq!(a.transpose().t_matmul(&b).unwrap(), ab);
        assert!(a.matmul(&a).is_err());
    }

    #[test]
    fn serde_validates() {
        let m: RealMatrix = serde_json::from_str(r#"{"rows":1,"cols":2,"data":[1.0,2.0]}"#).unwrap();
        assert_eq!(m.shape(), (1, 2));
        assert!(serde_json::from_str::<RealMatrix>(r#"{"rows":2,"cols":2,"data":[1.0]}"#).is_err());
    }
}
