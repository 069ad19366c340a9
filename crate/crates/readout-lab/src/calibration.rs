//! Expected calibration error and support-set temperature scaling.
//!
//! Confidence bins are equally spaced over [0,1] and half-open on the left,
//! so a confidence sitting exactly on an edge lands in the upper bin.

use crate::error::{Error, Result};
use crate::numcore::Matrix;
use crate::readouts::{argmax_rows, softmax_rows};

/// Reliability-diagram summary over `n_bins` equal-width confidence bins.
#[derive(Debug, Clone)]
pub struct CalibrationReport {
    pub n_bins: usize,
    /// Mean confidence per bin; 0 for empty bins.
    pub bin_confidence: Vec<f64>,
    /// Empirical accuracy per bin; 0 for empty bins.
    pub bin_accuracy: Vec<f64>,
    pub bin_counts: Vec<usize>,
    pub ece: f64,
    /// Fitted temperature when scaling was applied before binning.
    pub temperature: Option<f64>,
}

/// Result of a support-set temperature fit.
#[derive(Debug, Clone, Copy)]
pub struct TemperatureFit {
    pub t: f64,
    /// True when the objective was flat and the lower bound was returned.
    pub degenerate: bool,
}

const T_LO: f64 = 1e-2;
const T_HI: f64 = 1e2;

/// Expected calibration error of predicted probabilities.
pub fn ece(probs: &Matrix, labels: &[usize], n_bins: usize) -> Result<CalibrationReport> {
    let (n, c) = (probs.rows(), probs.cols());
    if n_bins == 0 {
        return Err(Error::InvalidParam("ece needs at least one bin".into()));
    }
    if labels.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{n} probability rows vs {} labels",
            labels.len()
        )));
    }
    for i in 0..n {
        let sum: f64 = (0..c).map(|j| probs[(i, j)]).sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidParam(format!(
                "probability row {i} sums to {sum}, not 1"
            )));
        }
        if labels[i] >= c {
            return Err(Error::InvalidParam(format!(
                "label {} out of range for {c} classes",
                labels[i]
            )));
        }
    }

    let predictions = argmax_rows(probs);
    let mut conf_sum = vec![0.0; n_bins];
    let mut hit_sum = vec![0.0; n_bins];
    let mut counts = vec![0usize; n_bins];
    for i in 0..n {
        let confidence = (0..c).map(|j| probs[(i, j)]).fold(f64::MIN, f64::max);
        // Edge ties go up: floor(conf * B) is the upper of the two bins.
        let bin = ((confidence * n_bins as f64).floor() as usize).min(n_bins - 1);
        conf_sum[bin] += confidence;
        hit_sum[bin] += if predictions[i] == labels[i] { 1.0 } else { 0.0 };
        counts[bin] += 1;
    }

    let mut bin_confidence = vec![0.0; n_bins];
    let mut bin_accuracy = vec![0.0; n_bins];
    let mut total = 0.0;
    for b in 0..n_bins {
        if counts[b] == 0 {
            continue;
        }
        let cnt = counts[b] as f64;
        bin_confidence[b] = conf_sum[b] / cnt;
        bin_accuracy[b] = hit_sum[b] / cnt;
        total += cnt / n as f64 * (bin_accuracy[b] - bin_confidence[b]).abs();
    }
    Ok(CalibrationReport {
        n_bins,
        bin_confidence,
        bin_accuracy,
        bin_counts: counts,
        ece: total,
        temperature: None,
    })
}

/// Mean negative log-likelihood of softmax(logits / t) against labels.
fn nll_at(logits: &Matrix, labels: &[usize], t: f64) -> f64 {
    let probs = softmax_rows(&logits.scale(1.0 / t));
    let mut total = 0.0;
    for (i, &cls) in labels.iter().enumerate() {
        total -= probs[(i, cls)].ln();
    }
    total / labels.len() as f64
}

/// Fits a softmax temperature by golden-section search on log T.
///
/// A flat objective (every row's logits constant) returns the lower bound
/// with the degenerate flag set.
pub fn temperature_fit(logits: &Matrix, labels: &[usize]) -> Result<TemperatureFit> {
    let (n, c) = (logits.rows(), logits.cols());
    if n < 2 {
        return Err(Error::InvalidParam(format!(
            "temperature fit needs at least 2 samples, got {n}"
        )));
    }
    if labels.len() != n {
        return Err(Error::ShapeMismatch(format!("{n} logit rows vs {} labels", labels.len())));
    }
    let first = labels[0];
    if labels.iter().all(|&l| l == first) {
        return Err(Error::InvalidParam(
            "temperature fit needs at least two distinct labels".into(),
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::InvalidParam(format!("label {bad} out of range for {c} classes")));
    }

    let mut flat = true;
    'rows: for i in 0..n {
        for j in 1..c {
            if (logits[(i, j)] - logits[(i, 0)]).abs() > 1e-12 {
                flat = false;
                break 'rows;
            }
        }
    }
    if flat {
        return Ok(TemperatureFit { t: T_LO, degenerate: true });
    }

    let f = |x: f64| nll_at(logits, labels, x.exp());
    let (mut lo, mut hi) = (T_LO.ln(), T_HI.ln());
    if !f(lo).is_finite() && !f(hi).is_finite() {
        return Err(Error::Degenerate(
            "temperature objective is non-finite at both bracket endpoints".into(),
        ));
    }
    // Golden-section: unimodal in practice, 1e-4 final bracket width.
    let inv_phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > 1e-4 {
        // Non-finite values order as worse than any finite one.
        let keep_left = match (f1.is_finite(), f2.is_finite()) {
            (true, true) => f1 < f2,
            (true, false) => true,
            (false, true) => false,
            (false, false) => true,
        };
        if keep_left {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    Ok(TemperatureFit { t: (0.5 * (lo + hi)).exp(), degenerate: false })
}
