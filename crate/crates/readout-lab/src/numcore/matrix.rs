//! Row-major dense matrix of `f64`.
//!
//! Invariant: entries are finite. Constructors on untrusted data return
//! errors; arithmetic enforces the invariant with debug assertions so test
//! builds catch any NaN/Inf leak while release binaries stay lean.

use crate::error::{Error, Result};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl std::fmt::Debug for Matrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows.min(8) {
            write!(f, "  ")?;
            for j in 0..self.cols.min(8) {
                write!(f, "{:10.4} ", self[(i, j)])?;
            }
            writeln!(f, "{}", if self.cols > 8 { "..." } else { "" })?;
        }
        if self.rows > 8 {
            writeln!(f, "  ...")?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length must equal rows*cols");
        let m = Matrix { rows, cols, data };
        m.debug_assert_finite("from_vec");
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Matrix::from_vec(r, c, data)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Matrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m.debug_assert_finite("from_fn");
        m
    }

    /// Checked constructor for externally supplied data (file loads).
    pub fn try_from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "expected {} values for a {}x{} matrix, got {}",
                rows * cols,
                rows,
                cols,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parse(format!(
                "non-finite value at flat index {bad} ({}, {})",
                bad / cols.max(1),
                bad % cols.max(1)
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn gaussian(rows: usize, cols: usize, rng: &mut impl Rng) -> Self {
        let data = (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect();
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn debug_assert_finite(&self, op: &str) {
        debug_assert!(self.is_finite(), "non-finite entry after {op}");
    }

    /// General matrix product with optional transposes on either operand.
    pub fn gemm(a: &Matrix, ta: bool, b: &Matrix, tb: bool) -> Matrix {
        let (m, k1) = if ta { (a.cols, a.rows) } else { (a.rows, a.cols) };
        let (k2, n) = if tb { (b.cols, b.rows) } else { (b.rows, b.cols) };
        assert_eq!(k1, k2, "gemm inner dimensions {k1} vs {k2}");
        let mut out = Matrix::zeros(m, n);
        // Loop order keeps the innermost accesses contiguous for the
        // untransposed layouts that dominate usage.
        match (ta, tb) {
            (false, false) => {
                for i in 0..m {
                    for k in 0..k1 {
                        let aik = a.data[i * a.cols + k];
                        if aik == 0.0 {
                            continue;
                        }
                        let brow = &b.data[k * b.cols..(k + 1) * b.cols];
                        let orow = &mut out.data[i * n..(i + 1) * n];
                        for j in 0..n {
                            orow[j] += aik * brow[j];
                        }
                    }
                }
            }
            (true, false) => {
                for k in 0..k1 {
                    let arow = &a.data[k * a.cols..(k + 1) * a.cols];
                    let brow = &b.data[k * b.cols..(k + 1) * b.cols];
                    for i in 0..m {
                        let aki = arow[i];
                        if aki == 0.0 {
                            continue;
                        }
                        let orow = &mut out.data[i * n..(i + 1) * n];
                        for j in 0..n {
                            orow[j] += aki * brow[j];
                        }
                    }
                }
            }
            (false, true) => {
                for i in 0..m {
                    let arow = &a.data[i * a.cols..(i + 1) * a.cols];
                    let orow = &mut out.data[i * n..(i + 1) * n];
                    for j in 0..n {
                        let brow = &b.data[j * b.cols..(j + 1) * b.cols];
                        let mut acc = 0.0;
                        for k in 0..k1 {
                            acc += arow[k] * brow[k];
                        }
                        orow[j] = acc;
                    }
                }
            }
            (true, true) => {
                for i in 0..m {
                    for j in 0..n {
                        let mut acc = 0.0;
                        for k in 0..k1 {
                            acc += a.data[k * a.cols + i] * b.data[j * b.cols + k];
                        }
                        out.data[i * n + j] = acc;
                    }
                }
            }
        }
        out.debug_assert_finite("gemm");
        out
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        Matrix::gemm(self, false, other, false)
    }

    /// `self^T * other`
    pub fn matmul_tn(&self, other: &Matrix) -> Matrix {
        Matrix::gemm(self, true, other, false)
    }

    /// `self * other^T`
    pub fn matmul_nt(&self, other: &Matrix) -> Matrix {
        Matrix::gemm(self, false, other, true)
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "add shape");
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        let m = Matrix { rows: self.rows, cols: self.cols, data };
        m.debug_assert_finite("add");
        m
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "sub shape");
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Matrix { rows: self.rows, cols: self.cols, data }
    }

    pub fn scale(&self, factor: f64) -> Matrix {
        let data = self.data.iter().map(|a| a * factor).collect();
        let m = Matrix { rows: self.rows, cols: self.cols, data };
        m.debug_assert_finite("scale");
        m
    }

    pub fn hadamard(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "hadamard shape");
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a * b).collect();
        Matrix { rows: self.rows, cols: self.cols, data }
    }

    /// Adds a 1-row matrix to every row.
    pub fn add_row_broadcast(&self, row: &Matrix) -> Matrix {
        assert_eq!(row.rows, 1, "broadcast operand must have one row");
        assert_eq!(row.cols, self.cols, "broadcast width");
        let mut out = self.clone();
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(i, j)] += row[(0, j)];
            }
        }
        out
    }

    /// Appends a column of ones (homogeneous/bias coordinate).
    pub fn append_ones_col(&self) -> Matrix {
        let mut out = Matrix::zeros(self.rows, self.cols + 1);
        for i in 0..self.rows {
            out.row_mut(i)[..self.cols].copy_from_slice(self.row(i));
            out[(i, self.cols)] = 1.0;
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Mean of each column as a 1-row matrix.
    pub fn col_means(&self) -> Matrix {
        let mut out = Matrix::zeros(1, self.cols);
        if self.rows == 0 {
            return out;
        }
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(0, j)] += self[(i, j)];
            }
        }
        out.scale(1.0 / self.rows as f64)
    }

    /// Copies the listed rows into a new matrix, preserving order.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(idx.len(), self.cols);
        for (r, &i) in idx.iter().enumerate() {
            assert!(i < self.rows, "row index {i} out of range");
            out.row_mut(r).copy_from_slice(self.row(i));
        }
        out
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gemm_matches_naive_on_all_transpose_combos() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = Matrix::gaussian(4, 3, &mut rng);
        let b = Matrix::gaussian(3, 5, &mut rng);
        let naive = |a: &Matrix, b: &Matrix| {
            Matrix::from_fn(a.rows(), b.cols(), |i, j| {
                (0..a.cols()).map(|k| a[(i, k)] * b[(k, j)]).sum()
            })
        };
        let at = a.transpose();
        let bt = b.transpose();
        let want = naive(&a, &b);
        for (got, name) in [
            (Matrix::gemm(&a, false, &b, false), "nn"),
            (Matrix::gemm(&at, true, &b, false), "tn"),
            (Matrix::gemm(&a, false, &bt, true), "nt"),
            (Matrix::gemm(&at, true, &bt, true), "tt"),
        ] {
            assert_relative_eq!(
                got.sub(&want).max_abs(),
                0.0,
                epsilon = 1e-12,
                max_relative = 1e-12
            );
            assert_eq!((got.rows(), got.cols()), (4, 5), "{name}");
        }
    }

    #[test]
    fn append_ones_col_places_bias_last() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let e = m.append_ones_col();
        assert_eq!(e.row(0), &[1.0, 2.0, 1.0]);
        assert_eq!(e.row(1), &[3.0, 4.0, 1.0]);
    }

    #[test]
    fn try_from_vec_rejects_non_finite() {
        let err = Matrix::try_from_vec(1, 2, vec![1.0, f64::NAN]).unwrap_err();
        assert!(matches!(err, crate::Error::Parse(_)));
    }

    #[test]
    fn select_rows_copies_in_order() {
        let m = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]);
        let s = m.select_rows(&[2, 0]);
        assert_eq!(s.row(0), &[2.0]);
        assert_eq!(s.row(1), &[0.0]);
    }
}
