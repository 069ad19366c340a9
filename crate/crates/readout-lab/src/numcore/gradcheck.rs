//! Central finite-difference verification of tape gradients.

use crate::error::Result;
use crate::numcore::{Matrix, NodeId, Tape};

/// Compares analytic tape gradients against central finite differences.
///
/// `f` builds a scalar-valued program on a fresh tape from leaves created for
/// each entry of `params`, in order. Returns the maximum relative error over
/// all parameter entries, measured as `|analytic - cd| / max(1, |cd|)`.
pub fn grad_check<F>(f: F, params: &[Matrix], eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[NodeId]) -> Result<NodeId>,
{
    let eval = |mats: &[Matrix]| -> Result<f64> {
        let mut tape = Tape::new();
        let ids: Vec<NodeId> = mats.iter().map(|m| tape.leaf(m.clone())).collect();
        let root = f(&mut tape, &ids)?;
        Ok(tape.value(root)[(0, 0)])
    };

    // Analytic pass.
    let mut tape = Tape::new();
    let ids: Vec<NodeId> = params.iter().map(|m| tape.leaf(m.clone())).collect();
    let root = f(&mut tape, &ids)?;
    tape.backward(root)?;
    let analytic: Vec<Matrix> = ids.iter().map(|&id| tape.grad(id)).collect();

    let mut worst = 0.0f64;
    let mut work: Vec<Matrix> = params.to_vec();
    for p in 0..params.len() {
        for i in 0..params[p].rows() {
            for j in 0..params[p].cols() {
                let orig = work[p][(i, j)];
                work[p][(i, j)] = orig + eps;
                let up = eval(&work)?;
                work[p][(i, j)] = orig - eps;
                let down = eval(&work)?;
                work[p][(i, j)] = orig;
                let cd = (up - down) / (2.0 * eps);
                let rel = (analytic[p][(i, j)] - cd).abs() / cd.abs().max(1.0);
                worst = worst.max(rel);
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn passes_on_a_correct_quadratic() {
        let a = Matrix::from_rows(&[vec![1.0, -2.0], vec![0.5, 3.0]]);
        let err = grad_check(
            |t, ids| {
                let sq = t.hadamard(ids[0], ids[0]);
                let ones_r = t.constant(Matrix::from_fn(1, 2, |_, _| 1.0));
                let ones_c = t.constant(Matrix::from_fn(2, 1, |_, _| 1.0));
                let rs = t.matmul(ones_r, sq);
                Ok(t.matmul(rs, ones_c))
            },
            &[a],
            1e-6,
        )
        .unwrap();
        assert!(err <= 1e-8, "{err}");
    }

    #[test]
    fn detects_a_mismatched_gradient() {
        // Negative control for the checker itself: serve sum(a^2) to the
        // analytic pass but sum(a^3) to every finite-difference evaluation.
        // The reported error must be far above any sane tolerance.
        use std::cell::Cell;
        let calls = Cell::new(0usize);
        let a = Matrix::from_rows(&[vec![1.2, 0.7]]);
        let err = grad_check(
            |t, ids| {
                let first = calls.get() == 0;
                calls.set(calls.get() + 1);
                let sq = t.hadamard(ids[0], ids[0]);
                let val = if first { sq } else { t.hadamard(sq, ids[0]) };
                let ones_c = t.constant(Matrix::from_fn(2, 1, |_, _| 1.0));
                Ok(t.matmul(val, ones_c))
            },
            &[a],
            1e-6,
        )
        .unwrap();
        assert!(err > 1e-2, "checker failed to flag a wrong gradient ({err})");
    }
}
