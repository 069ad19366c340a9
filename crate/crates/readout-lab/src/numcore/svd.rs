//! Randomized truncated SVD and PCA projection.
//!
//! The SVD follows the randomized range-finder recipe: a seeded Gaussian test
//! matrix with 8 columns of oversampling, a configurable number of power
//! iterations with re-orthonormalization for spectral sharpening, then an
//! exact one-sided Jacobi SVD of the small projected matrix. Deterministic
//! for a fixed seed.

use crate::error::{Error, Result};
use crate::numcore::{sym_eigen, Matrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const OVERSAMPLE: usize = 8;

pub struct Svd {
    /// n x k, orthonormal columns (zero columns when k exceeds the rank).
    pub u: Matrix,
    /// Singular values, non-negative and non-increasing.
    pub s: Vec<f64>,
    /// m x k, orthonormal columns.
    pub v: Matrix,
}

/// Rank-`k` truncated SVD of an n x m matrix.
pub fn truncated_svd(m: &Matrix, k: usize, power_iters: usize, seed: u64) -> Result<Svd> {
    let (n, mm) = (m.rows(), m.cols());
    let max_rank = n.min(mm);
    if k == 0 || k > max_rank {
        return Err(Error::InvalidParam(format!(
            "svd rank k={k} must be in 1..={max_rank} for a {n}x{mm} matrix"
        )));
    }
    let width = (k + OVERSAMPLE).min(max_rank);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega = Matrix::gaussian(mm, width, &mut rng);

    let mut q = m.matmul(&omega);
    orthonormalize_columns(&mut q);
    for _ in 0..power_iters {
        let mut z = m.matmul_tn(&q);
        orthonormalize_columns(&mut z);
        q = m.matmul(&z);
        orthonormalize_columns(&mut q);
    }

    // B = Q^T M is width x m; its SVD lifts back through Q.
    let b = q.matmul_tn(m);
    let (u_b, s_all, v_b) = jacobi_svd(&b.transpose());
    // jacobi_svd(B^T) returns B^T = U S V^T, i.e. B = V S U^T.
    let u_full = q.matmul(&v_b);
    let mut order: Vec<usize> = (0..s_all.len()).collect();
    order.sort_by(|&i, &j| s_all[j].partial_cmp(&s_all[i]).unwrap());

    let mut u = Matrix::zeros(n, k);
    let mut v = Matrix::zeros(mm, k);
    let mut s = Vec::with_capacity(k);
    for (col, &src) in order.iter().take(k).enumerate() {
        s.push(s_all[src]);
        for i in 0..n {
            u[(i, col)] = u_full[(i, src)];
        }
        for i in 0..mm {
            v[(i, col)] = u_b[(i, src)];
        }
    }
    Ok(Svd { u, s, v })
}

/// Projects mean-centered rows of `x` onto their top-`k` principal directions.
///
/// Output columns are ordered by non-increasing variance; each column's sign
/// is fixed so its largest-magnitude entry is positive.
pub fn pca_project(x: &Matrix, k: usize) -> Result<Matrix> {
    let (n, d) = (x.rows(), x.cols());
    if k == 0 || k > d {
        return Err(Error::InvalidParam(format!(
            "pca component count k={k} must be in 1..={d}"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidParam("pca needs at least one row".into()));
    }
    let means = x.col_means();
    let centered = Matrix::from_fn(n, d, |i, j| x[(i, j)] - means[(0, j)]);

    // Work on whichever Gram matrix is smaller.
    let mut out;
    if d <= n {
        let cov = centered.matmul_tn(&centered);
        let (_, vecs) = sym_eigen(&cov);
        let vk = Matrix::from_fn(d, k, |i, j| vecs[(i, j)]);
        out = centered.matmul(&vk);
    } else {
        let gram = centered.matmul_nt(&centered);
        let (vals, vecs) = sym_eigen(&gram);
        out = Matrix::from_fn(n, k, |i, j| vecs[(i, j)] * vals[j].max(0.0).sqrt());
    }
    for j in 0..k {
        let mut best = 0usize;
        for i in 0..n {
            if out[(i, j)].abs() > out[(best, j)].abs() {
                best = i;
            }
        }
        if out[(best, j)] < 0.0 {
            for i in 0..n {
                out[(i, j)] = -out[(i, j)];
            }
        }
    }
    Ok(out)
}

/// Modified Gram-Schmidt with a second pass; dependent columns are zeroed.
fn orthonormalize_columns(m: &mut Matrix) {
    let (n, c) = (m.rows(), m.cols());
    let mut col = vec![0.0; n];
    for j in 0..c {
        for i in 0..n {
            col[i] = m[(i, j)];
        }
        let original_norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        for _pass in 0..2 {
            for p in 0..j {
                let mut dot = 0.0;
                for i in 0..n {
                    dot += m[(i, p)] * col[i];
                }
                for i in 0..n {
                    col[i] -= dot * m[(i, p)];
                }
            }
        }
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= 1e-12 * original_norm.max(1.0) {
            for i in 0..n {
                m[(i, j)] = 0.0;
            }
        } else {
            for i in 0..n {
                m[(i, j)] = col[i] / norm;
            }
        }
    }
}

/// One-sided Jacobi SVD: returns (U, S, V) with `a = U diag(S) V^T`.
///
/// `a` is n x c with c small; U is n x c with orthonormal (or zero) columns,
/// V is c x c orthogonal. Singular values come back unsorted.
fn jacobi_svd(a: &Matrix) -> (Matrix, Vec<f64>, Matrix) {
    let (n, c) = (a.rows(), a.cols());
    let mut w = a.clone();
    let mut v = Matrix::identity(c);
    let scale = a.max_abs().max(1e-300);
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..c {
            for q in p + 1..c {
                let mut app = 0.0;
                let mut aqq = 0.0;
                let mut apq = 0.0;
                for i in 0..n {
                    app += w[(i, p)] * w[(i, p)];
                    aqq += w[(i, q)] * w[(i, q)];
                    apq += w[(i, p)] * w[(i, q)];
                }
                if apq.abs() <= 1e-15 * (app * aqq).sqrt().max(1e-30 * scale * scale) {
                    continue;
                }
                rotated = true;
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = t * cs;
                for i in 0..n {
                    let wip = w[(i, p)];
                    let wiq = w[(i, q)];
                    w[(i, p)] = cs * wip - sn * wiq;
                    w[(i, q)] = sn * wip + cs * wiq;
                }
                for i in 0..c {
                    let vip = v[(i, p)];
                    let viq = v[(i, q)];
                    v[(i, p)] = cs * vip - sn * viq;
                    v[(i, q)] = sn * vip + cs * viq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut s = vec![0.0; c];
    let mut u = Matrix::zeros(n, c);
    for j in 0..c {
        let mut norm = 0.0;
        for i in 0..n {
            norm += w[(i, j)] * w[(i, j)];
        }
        let norm = norm.sqrt();
        s[j] = norm;
        if norm > 0.0 {
            for i in 0..n {
                u[(i, j)] = w[(i, j)] / norm;
            }
        }
    }
    (u, s, v)
}
