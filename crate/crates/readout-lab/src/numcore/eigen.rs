//! Dense symmetric eigendecomposition by cyclic Jacobi rotations.
//!
//! Used for PCA covariance factorizations and as the reference eigensolver
//! behind small spectral checks. Intended for matrices up to a few hundred
//! rows; cost is O(n^3) per sweep.

use crate::numcore::Matrix;

/// Eigendecomposition of a symmetric matrix.
///
/// Returns `(values, vectors)` with eigenvalues sorted in non-increasing
/// order and the matching eigenvectors as columns of an orthogonal matrix.
pub fn sym_eigen(a: &Matrix) -> (Vec<f64>, Matrix) {
    let n = a.rows();
    assert_eq!(n, a.cols(), "sym_eigen needs a square matrix");
    debug_assert!(
        a.sub(&a.transpose()).max_abs() <= 1e-9 * (1.0 + a.max_abs()),
        "sym_eigen input must be symmetric"
    );
    let mut m = a.clone();
    let mut v = Matrix::identity(n);
    let scale = a.max_abs().max(1e-300);
    let tol = 1e-14 * scale;

    for _sweep in 0..60 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                off = off.max(m[(p, q)].abs());
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq.abs() <= tol * 1e-2 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // Rotate rows/columns p and q of M and columns of V.
                for i in 0..n {
                    let mip = m[(i, p)];
                    let miq = m[(i, q)];
                    m[(i, p)] = c * mip - s * miq;
                    m[(i, q)] = s * mip + c * miq;
                }
                for j in 0..n {
                    let mpj = m[(p, j)];
                    let mqj = m[(q, j)];
                    m[(p, j)] = c * mpj - s * mqj;
                    m[(q, j)] = s * mpj + c * mqj;
                }
                for i in 0..n {
                    let vip = v[(i, p)];
                    let viq = v[(i, q)];
                    v[(i, p)] = c * vip - s * viq;
                    v[(i, q)] = s * vip + c * viq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    order.sort_by(|&i, &j| diag[j].partial_cmp(&diag[i]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (new_col, &old_col) in order.iter().enumerate() {
        for i in 0..n {
            vectors[(i, new_col)] = v[(i, old_col)];
        }
    }
    (values, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn diagonal_matrix_is_its_own_decomposition() {
        let a = Matrix::from_rows(&[vec![3.0, 0.0], vec![0.0, -1.0]]);
        let (vals, _) = sym_eigen(&a);
        assert_relative_eq!(vals[0], 3.0, epsilon = 1e-12);
        assert_relative_eq!(vals[1], -1.0, epsilon = 1e-12);
    }

    #[test]
    fn two_by_two_hand_computed() {
        // Eigenvalues of [[2,1],[1,2]] are 3 and 1.
        let a = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]);
        let (vals, vecs) = sym_eigen(&a);
        assert_relative_eq!(vals[0], 3.0, epsilon = 1e-12);
        assert_relative_eq!(vals[1], 1.0, epsilon = 1e-12);
        // First eigenvector is (1,1)/sqrt(2) up to sign.
        let ratio = vecs[(0, 0)] / vecs[(1, 0)];
        assert_relative_eq!(ratio, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn reconstructs_random_symmetric_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = Matrix::gaussian(12, 12, &mut rng);
        let a = g.add(&g.transpose()).scale(0.5);
        let (vals, vecs) = sym_eigen(&a);
        let lambda = Matrix::from_fn(12, 12, |i, j| if i == j { vals[i] } else { 0.0 });
        let recon = vecs.matmul(&lambda).matmul(&vecs.transpose());
        assert!(recon.sub(&a).max_abs() <= 1e-10);
        // Orthonormal columns.
        let gram = vecs.matmul_tn(&vecs);
        assert!(gram.sub(&Matrix::identity(12)).max_abs() <= 1e-10);
        // Sorted non-increasing.
        for w in vals.windows(2) {
            assert!(w[0] >= w[1] - 1e-12);
        }
    }
}
