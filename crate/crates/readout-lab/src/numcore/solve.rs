//! Symmetric positive definite solves via Cholesky factorization.

use crate::error::{Error, Result};
use crate::numcore::Matrix;

/// Lower-triangular Cholesky factor of an SPD matrix.
///
/// Only the lower triangle of the input is read, so the caller is responsible
/// for supplying a symmetric matrix. A non-positive pivot aborts the
/// factorization and reports which pivot failed.
pub struct Cholesky {
    l: Matrix,
}

impl Cholesky {
    pub fn factor(k: &Matrix) -> Result<Cholesky> {
        let n = k.rows();
        assert_eq!(n, k.cols(), "Cholesky needs a square matrix");
        let mut l = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut sum = k[(i, j)];
                for p in 0..j {
                    sum -= l[(i, p)] * l[(j, p)];
                }
                if i == j {
                    if sum <= 0.0 || !sum.is_finite() {
                        return Err(Error::NotPositiveDefinite { pivot: i });
                    }
                    l[(i, i)] = sum.sqrt();
                } else {
                    l[(i, j)] = sum / l[(j, j)];
                }
            }
        }
        Ok(Cholesky { l })
    }

    /// Solves `K X = B` for every column of `B`.
    pub fn solve(&self, b: &Matrix) -> Matrix {
        let n = self.l.rows();
        assert_eq!(b.rows(), n, "rhs rows must match system size");
        let c = b.cols();
        // Forward substitution L Y = B, then back substitution L^T X = Y.
        let mut x = b.clone();
        for i in 0..n {
            for j in 0..c {
                let mut sum = x[(i, j)];
                for p in 0..i {
                    sum -= self.l[(i, p)] * x[(p, j)];
                }
                x[(i, j)] = sum / self.l[(i, i)];
            }
        }
        for i in (0..n).rev() {
            for j in 0..c {
                let mut sum = x[(i, j)];
                for p in i + 1..n {
                    sum -= self.l[(p, i)] * x[(p, j)];
                }
                x[(i, j)] = sum / self.l[(i, i)];
            }
        }
        x
    }

    pub fn factor_matrix(&self) -> &Matrix {
        &self.l
    }
}

/// One-shot SPD solve of `K X = B`.
pub fn solve_spd(k: &Matrix, b: &Matrix) -> Result<Matrix> {
    Ok(Cholesky::factor(k)?.solve(b))
}
