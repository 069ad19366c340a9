//! Few-shot classification heads over frozen embeddings.
//!
//! Three heads share the same episode interface: origin-anchored prototypes
//! (class means scored by inner product), a closed-form ridge head whose bias
//! column rides inside the regularized solve, and a multinomial logistic
//! baseline fit by full-batch gradient descent.
//!
//! The ridge head is deliberately implemented twice, once through the dual
//! (n x n) system and once through the primal ((d+1) x (d+1)) system. The two
//! routes are algebraically equal and are checked against each other rather
//! than merged.

use crate::error::{Error, Result};
use crate::numcore::{solve_spd, Matrix};

/// Origin-anchored prototype head: one mean embedding per class.
#[derive(Debug, Clone)]
pub struct PrototypeModel {
    /// C x d_z, row c is the mean of class-c support embeddings.
    pub prototypes: Matrix,
    /// Support rows that contributed to each prototype.
    pub class_counts: Vec<usize>,
}

/// Closed-form ridge head with the bias inside the regularized solve.
#[derive(Debug, Clone)]
pub struct FittedRidge {
    /// d_z x C weight block.
    pub w: Matrix,
    /// Per-class bias, length C.
    pub b: Vec<f64>,
    pub lambda: f64,
}

/// Multinomial logistic head, L2 on weights only.
#[derive(Debug, Clone)]
pub struct LogisticModel {
    pub w: Matrix,
    pub b: Vec<f64>,
    pub lambda: f64,
    pub iterations_used: usize,
}

/// Decodes a one-hot label matrix into class indices.
///
/// Rows must contain exactly one entry equal to 1 and zeros elsewhere
/// (tolerance 1e-9 absorbs serialization round-trips).
pub fn one_hot_labels(y: &Matrix) -> Result<Vec<usize>> {
    let (n, c) = (y.rows(), y.cols());
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let mut hot: Option<usize> = None;
        for j in 0..c {
            let v = y[(i, j)];
            if (v - 1.0).abs() <= 1e-9 {
                if hot.is_some() {
                    return Err(Error::InvalidParam(format!(
                        "label row {i} has more than one active class"
                    )));
                }
                hot = Some(j);
            } else if v.abs() > 1e-9 {
                return Err(Error::InvalidParam(format!(
                    "label row {i} entry {j} is {v}, not 0 or 1"
                )));
            }
        }
        labels.push(hot.ok_or_else(|| {
            Error::InvalidParam(format!("label row {i} has no active class"))
        })?);
    }
    Ok(labels)
}

/// Row-wise argmax with ties broken toward the lowest class index.
pub fn argmax_rows(logits: &Matrix) -> Vec<usize> {
    (0..logits.rows())
        .map(|i| {
            let mut best = 0usize;
            for j in 1..logits.cols() {
                if logits[(i, j)] > logits[(i, best)] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Fraction of predictions matching labels. Empty input counts as 0.
pub fn accuracy(predictions: &[usize], labels: &[usize]) -> f64 {
    if predictions.is_empty() {
        return 0.0;
    }
    let hits = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    hits as f64 / predictions.len() as f64
}

/// Row-wise softmax with per-row max subtraction.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let (n, c) = (logits.rows(), logits.cols());
    Matrix::from_fn(n, c, |i, j| {
        let mut mx = f64::NEG_INFINITY;
        for k in 0..c {
            mx = mx.max(logits[(i, k)]);
        }
        let mut denom = 0.0;
        for k in 0..c {
            denom += (logits[(i, k)] - mx).exp();
        }
        (logits[(i, j)] - mx).exp() / denom
    })
}

/// Class means of the support set.
pub fn fit_prototypes(z_s: &Matrix, y_s: &Matrix) -> Result<PrototypeModel> {
    if z_s.rows() != y_s.rows() {
        return Err(Error::ShapeMismatch(format!(
            "{} embedding rows vs {} label rows",
            z_s.rows(),
            y_s.rows()
        )));
    }
    let c = y_s.cols();
    if c < 2 {
        return Err(Error::InsufficientClasses(format!(
            "prototype head needs at least 2 classes, got {c}"
        )));
    }
    let labels = one_hot_labels(y_s)?;
    let d = z_s.cols();
    let mut sums = Matrix::zeros(c, d);
    let mut counts = vec![0usize; c];
    for (i, &cls) in labels.iter().enumerate() {
        counts[cls] += 1;
        for j in 0..d {
            sums[(cls, j)] += z_s[(i, j)];
        }
    }
    for (cls, &count) in counts.iter().enumerate() {
        if count == 0 {
            return Err(Error::ClassWithoutSupport { class: cls });
        }
        for j in 0..d {
            sums[(cls, j)] /= count as f64;
        }
    }
    Ok(PrototypeModel { prototypes: sums, class_counts: counts })
}

/// Inner-product scores against each prototype.
pub fn prototype_logits(model: &PrototypeModel, z_q: &Matrix) -> Result<Matrix> {
    if z_q.cols() != model.prototypes.cols() {
        return Err(Error::ShapeMismatch(format!(
            "query dim {} vs prototype dim {}",
            z_q.cols(),
            model.prototypes.cols()
        )));
    }
    Ok(z_q.matmul_nt(&model.prototypes))
}

/// Softmax over prototype scores.
pub fn prototype_softmax(model: &PrototypeModel, z_q: &Matrix) -> Result<Matrix> {
    Ok(softmax_rows(&prototype_logits(model, z_q)?))
}

/// Closed-form ridge fit through the dual (n x n) system.
///
/// With the bias column appended, solving against the Gram side gives
/// stacked weights [W; b^T] = Z~^T (Z~ Z~^T + lambda I)^{-1} Y.
pub fn fit_ridge(z_s: &Matrix, y_s: &Matrix, lambda: f64) -> Result<FittedRidge> {
    validate_ridge_inputs(z_s, y_s, lambda)?;
    let zt = z_s.append_ones_col();
    let n = zt.rows();
    let mut k = zt.matmul_nt(&zt);
    for i in 0..n {
        k[(i, i)] += lambda;
    }
    let a = solve_spd(&k, y_s)?;
    debug_assert!({
        // Dual normal equations must hold to working precision at fit time.
        let resid = k.matmul(&a).sub(y_s).frobenius_norm();
        resid <= 1e-6 * y_s.frobenius_norm().max(1.0)
    });
    Ok(split_stacked(&zt.matmul_tn(&a), lambda))
}

/// Closed-form ridge fit through the primal ((d+1) x (d+1)) system.
///
/// Kept as an independent route for cross-checking the dual solve; do not
/// fold the two implementations together.
pub fn fit_ridge_primal(z_s: &Matrix, y_s: &Matrix, lambda: f64) -> Result<FittedRidge> {
    validate_ridge_inputs(z_s, y_s, lambda)?;
    let zt = z_s.append_ones_col();
    let p = zt.cols();
    let mut k = zt.matmul_tn(&zt);
    for i in 0..p {
        k[(i, i)] += lambda;
    }
    let rhs = zt.matmul_tn(y_s);
    Ok(split_stacked(&solve_spd(&k, &rhs)?, lambda))
}

fn validate_ridge_inputs(z_s: &Matrix, y_s: &Matrix, lambda: f64) -> Result<()> {
    if z_s.rows() == 0 {
        return Err(Error::InvalidParam("ridge fit needs at least one support row".into()));
    }
    if z_s.rows() != y_s.rows() {
        return Err(Error::ShapeMismatch(format!(
            "{} embedding rows vs {} label rows",
            z_s.rows(),
            y_s.rows()
        )));
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidParam(format!("ridge lambda must be > 0, got {lambda}")));
    }
    Ok(())
}

/// Splits stacked (d_z+1) x C parameters into the weight block and bias row.
fn split_stacked(stacked: &Matrix, lambda: f64) -> FittedRidge {
    let d = stacked.rows() - 1;
    let c = stacked.cols();
    let w = Matrix::from_fn(d, c, |i, j| stacked[(i, j)]);
    let b = (0..c).map(|j| stacked[(d, j)]).collect();
    FittedRidge { w, b, lambda }
}

/// Query logits Z_q W + 1 b^T.
pub fn ridge_logits(model: &FittedRidge, z_q: &Matrix) -> Result<Matrix> {
    if z_q.cols() != model.w.rows() {
        return Err(Error::ShapeMismatch(format!(
            "query dim {} vs weight dim {}",
            z_q.cols(),
            model.w.rows()
        )));
    }
    let mut out = z_q.matmul(&model.w);
    for i in 0..out.rows() {
        for j in 0..out.cols() {
            out[(i, j)] += model.b[j];
        }
    }
    Ok(out)
}

/// Query logits Z_q W + 1 b^T for a fitted logistic head.
pub fn logistic_logits(model: &LogisticModel, z_q: &Matrix) -> Result<Matrix> {
    if z_q.cols() != model.w.rows() {
        return Err(Error::ShapeMismatch(format!(
            "query dim {} vs weight dim {}",
            z_q.cols(),
            model.w.rows()
        )));
    }
    let mut out = z_q.matmul(&model.w);
    for i in 0..out.rows() {
        for j in 0..out.cols() {
            out[(i, j)] += model.b[j];
        }
    }
    Ok(out)
}

/// Multinomial logistic fit: mean cross-entropy + (lambda/2)||W||_F^2,
/// bias unregularized, full-batch gradient descent with backtracking.
pub fn fit_logistic(
    z_s: &Matrix,
    y_s: &Matrix,
    lambda: f64,
    max_iters: usize,
    tol: f64,
) -> Result<LogisticModel> {
    if z_s.rows() != y_s.rows() {
        return Err(Error::ShapeMismatch(format!(
            "{} embedding rows vs {} label rows",
            z_s.rows(),
            y_s.rows()
        )));
    }
    if lambda < 0.0 {
        return Err(Error::InvalidParam(format!("logistic lambda must be >= 0, got {lambda}")));
    }
    let labels = one_hot_labels(y_s)?;
    let (n, d, c) = (z_s.rows(), z_s.cols(), y_s.cols());
    let nf = n as f64;

    let loss_of = |w: &Matrix, b: &[f64]| -> f64 {
        let mut logits = z_s.matmul(w);
        for i in 0..n {
            for j in 0..c {
                logits[(i, j)] += b[j];
            }
        }
        let probs = softmax_rows(&logits);
        let mut ce = 0.0;
        for (i, &cls) in labels.iter().enumerate() {
            ce -= probs[(i, cls)].max(1e-300).ln();
        }
        ce / nf + 0.5 * lambda * w.frobenius_norm().powi(2)
    };

    let mut w = Matrix::zeros(d, c);
    let mut b = vec![0.0; c];
    let mut loss = loss_of(&w, &b);
    let mut iterations_used = 0;

    for iter in 0..max_iters {
        let mut logits = z_s.matmul(&w);
        for i in 0..n {
            for j in 0..c {
                logits[(i, j)] += b[j];
            }
        }
        let mut resid = softmax_rows(&logits);
        for (i, &cls) in labels.iter().enumerate() {
            resid[(i, cls)] -= 1.0;
        }
        let gw = z_s.matmul_tn(&resid).scale(1.0 / nf).add(&w.scale(lambda));
        let gb: Vec<f64> = (0..c)
            .map(|j| (0..n).map(|i| resid[(i, j)]).sum::<f64>() / nf)
            .collect();
        let gnorm =
            (gw.frobenius_norm().powi(2) + gb.iter().map(|g| g * g).sum::<f64>()).sqrt();
        if gnorm <= tol {
            break;
        }

        // Armijo backtracking along the negative gradient.
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let w_try = w.sub(&gw.scale(step));
            let b_try: Vec<f64> =
                b.iter().zip(&gb).map(|(bi, gi)| bi - step * gi).collect();
            let loss_try = loss_of(&w_try, &b_try);
            if !loss_try.is_finite() {
                return Err(Error::Diverged(format!(
                    "logistic loss became non-finite at iteration {iter}"
                )));
            }
            if loss_try <= loss - 1e-4 * step * gnorm * gnorm {
                w = w_try;
                b = b_try;
                loss = loss_try;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        iterations_used = iter + 1;
        if !accepted {
            // Step size underflowed; the iterate is as converged as the
            // arithmetic allows.
            break;
        }
    }
    Ok(LogisticModel { w, b, lambda, iterations_used })
}
