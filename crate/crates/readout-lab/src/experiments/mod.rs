//! Seeded experiment drivers: the translation sweep, the bimodal
//! hull-collapse sweep, the calibration suite, and a set of small worked
//! examples with frozen expected values.
//!
//! Every driver is deterministic for a fixed (config, seed list). Per-seed
//! work fans out over threads in contiguous chunks and merges back in seed
//! order, so the job count never changes the numbers. Aggregates use sample
//! standard deviation (n - 1); a single seed reports a std of zero.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calibration::{ece, temperature_fit, CalibrationReport};
use crate::error::{Error, Result};
use crate::geometry::{flag_interior, hull_distance};
use crate::metatrain::mix_seed;
use crate::numcore::Matrix;
use crate::readouts::{
    accuracy, argmax_rows, fit_logistic, fit_prototypes, fit_ridge, logistic_logits,
    prototype_logits, ridge_logits, softmax_rows,
};

/// One aggregated metric curve over the sweep variable.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricTrack {
    pub name: String,
    /// Mean over seeds, one entry per sweep value.
    pub mean: Vec<f64>,
    /// Sample standard deviation over seeds, zero for a single seed.
    pub std: Vec<f64>,
    /// True when the metric is a rate confined to [0, 1].
    pub bounded: bool,
}

/// Aggregated output of a sweep driver.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    /// Name of the swept variable, used as the first CSV column.
    pub variable: String,
    pub values: Vec<f64>,
    pub n_seeds: usize,
    pub tracks: Vec<MetricTrack>,
}

impl SweepResult {
    pub fn track(&self, name: &str) -> Option<&MetricTrack> {
        self.tracks.iter().find(|t| t.name == name)
    }

    /// Internal consistency: track lengths match the grid, stds are finite
    /// and nonnegative, bounded tracks stay inside [0, 1].
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::InvalidParam("sweep has no grid values".into()));
        }
        for t in &self.tracks {
            if t.mean.len() != self.values.len() || t.std.len() != self.values.len() {
                return Err(Error::ShapeMismatch(format!(
                    "track {} has {} means and {} stds for {} grid values",
                    t.name,
                    t.mean.len(),
                    t.std.len(),
                    self.values.len()
                )));
            }
            for (m, s) in t.mean.iter().zip(&t.std) {
                if !m.is_finite() || !s.is_finite() || *s < 0.0 {
                    return Err(Error::InvalidParam(format!(
                        "track {} contains a non-finite or negative entry",
                        t.name
                    )));
                }
                if t.bounded && (*m < -1e-9 || *m > 1.0 + 1e-9) {
                    return Err(Error::InvalidParam(format!(
                        "bounded track {} has mean {m} outside [0, 1]",
                        t.name
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Two gaussian classes split by a fixed margin along a random axis; the
/// whole cloud is then translated by each grid offset before fitting.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TranslationConfig {
    /// Total points, split evenly between the two classes.
    pub n: usize,
    pub d: usize,
    /// Distance between the two class centers (unit noise on every axis).
    pub margin: f64,
    /// Translation offsets applied along the center axis.
    pub t_grid: Vec<f64>,
    pub lambda: f64,
}

impl Default for TranslationConfig {
    fn default() -> Self {
        Self {
            n: 800,
            d: 64,
            margin: 6.0,
            t_grid: (0..=10).map(|i| i as f64 * 0.5).collect(),
            lambda: 10.0,
        }
    }
}

impl TranslationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 8 || self.n % 2 != 0 {
            return Err(Error::InvalidParam(format!(
                "translation sweep needs an even n >= 8, got {}",
                self.n
            )));
        }
        if self.d == 0 {
            return Err(Error::InvalidParam("embedding dimension must be > 0".into()));
        }
        if !(self.margin > 0.0) {
            return Err(Error::InvalidParam(format!(
                "class margin must be > 0, got {}",
                self.margin
            )));
        }
        if self.t_grid.is_empty() {
            return Err(Error::InvalidParam("translation grid is empty".into()));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::InvalidParam(format!(
                "ridge lambda must be > 0, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

struct TranslationSeed {
    proto: Vec<f64>,
    ridge: Vec<f64>,
}

fn translation_seed(cfg: &TranslationConfig, seed: u64) -> Result<TranslationSeed> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0, 17));
    let axis = random_orthonormal(cfg.d, 1, &mut rng);
    let half = cfg.n / 2;
    let labels: Vec<usize> = (0..cfg.n).map(|i| usize::from(i >= half)).collect();

    let mut z = Matrix::gaussian(cfg.n, cfg.d, &mut rng);
    for i in 0..cfg.n {
        let c = if i < half { -0.5 } else { 0.5 } * cfg.margin;
        for j in 0..cfg.d {
            z[(i, j)] += c * axis[(0, j)];
        }
    }

    let (s_idx, q_idx) = stratified_split(&labels, 2, &mut rng);
    let y_s = one_hot(&gather(&labels, &s_idx), 2);
    let q_labels = gather(&labels, &q_idx);

    let mut out = TranslationSeed { proto: Vec::new(), ridge: Vec::new() };
    for &t in &cfg.t_grid {
        let shifted = shift_along(&z, &axis, t);
        let zs = shifted.select_rows(&s_idx);
        let zq = shifted.select_rows(&q_idx);

        let proto = fit_prototypes(&zs, &y_s)?;
        let p_preds = argmax_rows(&prototype_logits(&proto, &zq)?);
        out.proto.push(accuracy(&p_preds, &q_labels));

        let ridge = fit_ridge(&zs, &y_s, cfg.lambda)?;
        let r_preds = argmax_rows(&ridge_logits(&ridge, &zq)?);
        out.ridge.push(accuracy(&r_preds, &q_labels));
    }
    Ok(out)
}

/// Prototype vs ridge accuracy as the embedding cloud slides along the
/// class axis. Tracks: `proto_acc`, `ridge_acc`.
pub fn run_translation_sweep(
    cfg: &TranslationConfig,
    seeds: &[u64],
    jobs: usize,
) -> Result<SweepResult> {
    cfg.validate()?;
    require_seeds(seeds)?;
    let per = per_seed(seeds, jobs, |s| translation_seed(cfg, s))?;
    let result = SweepResult {
        variable: "t".into(),
        values: cfg.t_grid.clone(),
        n_seeds: seeds.len(),
        tracks: vec![
            aggregate("proto_acc", cfg.t_grid.len(), true, &per, |p| &p.proto),
            aggregate("ridge_acc", cfg.t_grid.len(), true, &per, |p| &p.ridge),
        ],
    };
    result.validate()?;
    Ok(result)
}

/// Three classes in a random 3-D frame: two anchor classes on opposite
/// sides of the origin and one class split across two antipodal-leaning
/// modes. As `delta` grows the split-class mean slides into the segment
/// between the anchors and the prototype head stops predicting it.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BimodalConfig {
    /// Points per class; the split class puts half in each mode.
    pub n_per_class: usize,
    pub d: usize,
    /// Mode separations to sweep.
    pub delta_grid: Vec<f64>,
    pub sigma: f64,
    /// Mode radius: the mean height above the anchor axis is
    /// sqrt(max(0, r^2 - (delta/2)^2)), hitting zero at delta = 2r.
    pub r: f64,
    /// Side-marker offset along the third axis, sign tied to the mode.
    pub h0: f64,
    /// Anchor classes sit at -s and +s along the first axis.
    pub s: f64,
    pub lambda: f64,
}

impl Default for BimodalConfig {
    fn default() -> Self {
        Self {
            n_per_class: 100,
            d: 64,
            delta_grid: (0..=7).map(f64::from).collect(),
            sigma: 0.25,
            r: 2.5,
            h0: 3.5,
            s: 1.0,
            lambda: 10.0,
        }
    }
}

impl BimodalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_per_class < 8 || self.n_per_class % 2 != 0 {
            return Err(Error::InvalidParam(format!(
                "bimodal sweep needs an even n_per_class >= 8, got {}",
                self.n_per_class
            )));
        }
        if self.d < 3 {
            return Err(Error::InvalidParam(format!(
                "bimodal geometry needs d >= 3, got {}",
                self.d
            )));
        }
        if self.delta_grid.is_empty() {
            return Err(Error::InvalidParam("delta grid is empty".into()));
        }
        if !(self.sigma > 0.0) || !(self.r > 0.0) || !(self.s > 0.0) {
            return Err(Error::InvalidParam(
                "sigma, r, and s must all be > 0".into(),
            ));
        }
        if !(self.h0 >= 0.0) {
            return Err(Error::InvalidParam(format!(
                "marker offset h0 must be >= 0, got {}",
                self.h0
            )));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::InvalidParam(format!(
                "ridge lambda must be > 0, got {}",
                self.lambda
            )));
        }
        Ok(())
    }

    /// Designed hull distance of the split-class mean at a given delta.
    pub fn design_hull_height(&self, delta: f64) -> f64 {
        (self.r * self.r - 0.25 * delta * delta).max(0.0).sqrt()
    }
}

// The iterative linear head fitted alongside ridge in the bimodal sweep,
// to show the dominated regime stays linearly recoverable.
const BIMODAL_LOGISTIC_LAMBDA: f64 = 0.01;
const BIMODAL_LOGISTIC_ITERS: usize = 500;
const BIMODAL_LOGISTIC_TOL: f64 = 1e-7;

struct BimodalSeed {
    d_ch_emp: Vec<f64>,
    proto_recall: [Vec<f64>; 3],
    ridge_recall: [Vec<f64>; 3],
    logistic_recall: [Vec<f64>; 3],
    proto_acc: Vec<f64>,
    ridge_acc: Vec<f64>,
    logistic_acc: Vec<f64>,
}

fn bimodal_seed(cfg: &BimodalConfig, seed: u64) -> Result<BimodalSeed> {
    let mut frame_rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0, 23));
    let basis = random_orthonormal(cfg.d, 3, &mut frame_rng);
    let n = cfg.n_per_class;
    let total = 3 * n;
    let labels: Vec<usize> = (0..total).map(|i| i / n).collect();

    let mut out = BimodalSeed {
        d_ch_emp: Vec::new(),
        proto_recall: [Vec::new(), Vec::new(), Vec::new()],
        ridge_recall: [Vec::new(), Vec::new(), Vec::new()],
        logistic_recall: [Vec::new(), Vec::new(), Vec::new()],
        proto_acc: Vec::new(),
        ridge_acc: Vec::new(),
        logistic_acc: Vec::new(),
    };

    for (di, &delta) in cfg.delta_grid.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, di as u64 + 1, 29));
        let h = cfg.design_hull_height(delta);

        let mut z = Matrix::gaussian(total, cfg.d, &mut rng).scale(cfg.sigma);
        for i in 0..total {
            // Class 0 splits into two modes with a sign-tied side marker;
            // classes 1 and 2 anchor the segment through the origin.
            let (c1, c2, c3) = match labels[i] {
                0 => {
                    let sign = if i < n / 2 { 1.0 } else { -1.0 };
                    (sign * 0.5 * delta, h, sign * cfg.h0)
                }
                1 => (-cfg.s, 0.0, 0.0),
                _ => (cfg.s, 0.0, 0.0),
            };
            for j in 0..cfg.d {
                z[(i, j)] += c1 * basis[(0, j)] + c2 * basis[(1, j)] + c3 * basis[(2, j)];
            }
        }

        // Split class 0 by mode as well as by class, so support and query
        // carry exactly half of each mode; otherwise hypergeometric mode
        // imbalance tilts the empirical class-0 prototype along the mode
        // axis and leaks spurious recall into the dominated regime.
        let strata: Vec<usize> = (0..total)
            .map(|i| if labels[i] == 0 { usize::from(i >= n / 2) } else { labels[i] + 1 })
            .collect();
        let (s_idx, q_idx) = stratified_split(&strata, 4, &mut rng);
        let y_s = one_hot(&gather(&labels, &s_idx), 3);
        let q_labels = gather(&labels, &q_idx);
        let zs = z.select_rows(&s_idx);
        let zq = z.select_rows(&q_idx);

        let proto = fit_prototypes(&zs, &y_s)?;
        out.d_ch_emp.push(hull_distance(&proto.prototypes, 0)?.0);
        let p_preds = argmax_rows(&prototype_logits(&proto, &zq)?);
        out.proto_acc.push(accuracy(&p_preds, &q_labels));

        let ridge = fit_ridge(&zs, &y_s, cfg.lambda)?;
        let r_preds = argmax_rows(&ridge_logits(&ridge, &zq)?);
        out.ridge_acc.push(accuracy(&r_preds, &q_labels));

        // Ridge class scores are linear in the support class means, so once
        // the class-0 mean enters the others' hull, its score is a convex
        // combination of theirs and the argmax can no longer pick it. The
        // iterative head is margin-driven rather than mean-driven and shows
        // the same data stays linearly recoverable.
        let logistic = fit_logistic(
            &zs,
            &y_s,
            BIMODAL_LOGISTIC_LAMBDA,
            BIMODAL_LOGISTIC_ITERS,
            BIMODAL_LOGISTIC_TOL,
        )?;
        let l_preds = argmax_rows(&logistic_logits(&logistic, &zq)?);
        out.logistic_acc.push(accuracy(&l_preds, &q_labels));

        for cls in 0..3 {
            out.proto_recall[cls].push(recall(&p_preds, &q_labels, cls));
            out.ridge_recall[cls].push(recall(&r_preds, &q_labels, cls));
            out.logistic_recall[cls].push(recall(&l_preds, &q_labels, cls));
        }
    }
    Ok(out)
}

/// Hull-collapse sweep over the mode separation. Tracks: designed and
/// empirical hull distance of class 0, per-class recalls, overall accuracy.
pub fn run_bimodal_sweep(cfg: &BimodalConfig, seeds: &[u64], jobs: usize) -> Result<SweepResult> {
    cfg.validate()?;
    require_seeds(seeds)?;
    let per = per_seed(seeds, jobs, |s| bimodal_seed(cfg, s))?;
    let k = cfg.delta_grid.len();

    let design: Vec<f64> = cfg.delta_grid.iter().map(|&d| cfg.design_hull_height(d)).collect();
    let mut tracks = vec![MetricTrack {
        name: "d_ch".into(),
        mean: design,
        std: vec![0.0; k],
        bounded: false,
    }];
    tracks.push(aggregate("d_ch_emp", k, false, &per, |p| &p.d_ch_emp));
    for (cls, name) in ["proto_recall_a", "proto_recall_b", "proto_recall_c"]
        .iter()
        .enumerate()
    {
        tracks.push(aggregate(name, k, true, &per, move |p| &p.proto_recall[cls]));
    }
    for (cls, name) in ["ridge_recall_a", "ridge_recall_b", "ridge_recall_c"]
        .iter()
        .enumerate()
    {
        tracks.push(aggregate(name, k, true, &per, move |p| &p.ridge_recall[cls]));
    }
    for (cls, name) in ["logistic_recall_a", "logistic_recall_b", "logistic_recall_c"]
        .iter()
        .enumerate()
    {
        tracks.push(aggregate(name, k, true, &per, move |p| &p.logistic_recall[cls]));
    }
    tracks.push(aggregate("proto_acc", k, true, &per, |p| &p.proto_acc));
    tracks.push(aggregate("ridge_acc", k, true, &per, |p| &p.ridge_acc));
    tracks.push(aggregate("logistic_acc", k, true, &per, |p| &p.logistic_acc));

    let result = SweepResult {
        variable: "delta".into(),
        values: cfg.delta_grid.clone(),
        n_seeds: seeds.len(),
        tracks,
    };
    result.validate()?;
    Ok(result)
}

/// Calibration comparison of three query-probability routes on two
/// synthetic geometries: prototype softmax, support-fit temperature
/// scaling of the same logits, and a bias-bearing logistic head.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    /// Total points, split evenly across classes.
    pub n: usize,
    pub classes: usize,
    pub d: usize,
    pub n_bins: usize,
    /// Center radius for the origin-shifted geometry.
    pub rho: f64,
    /// Noise scale for the origin-shifted geometry.
    pub sigma: f64,
    /// Global offset, in units of mean pairwise center distance, applied
    /// along a direction orthogonal to every class center.
    pub shift_factor: f64,
    /// Per-class center radii for the varying-radius geometry run from
    /// `radius_min` to `radius_max` in equal steps.
    pub radius_min: f64,
    pub radius_max: f64,
    pub sigma_radius: f64,
    pub logistic_lambda: f64,
    pub logistic_iters: usize,
    pub logistic_tol: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            n: 500,
            classes: 5,
            d: 64,
            n_bins: 15,
            rho: 2.5,
            sigma: 1.1,
            shift_factor: 10.0,
            radius_min: 1.0,
            radius_max: 5.0,
            sigma_radius: 0.8,
            logistic_lambda: 0.01,
            logistic_iters: 500,
            logistic_tol: 1e-7,
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::InvalidParam(format!(
                "calibration needs >= 2 classes, got {}",
                self.classes
            )));
        }
        if self.n % self.classes != 0 || self.n / self.classes < 4 {
            return Err(Error::InvalidParam(format!(
                "n = {} must be a multiple of classes = {} with >= 4 points each",
                self.n, self.classes
            )));
        }
        if self.d < self.classes + 1 {
            return Err(Error::InvalidParam(format!(
                "d = {} too small for {} orthogonal centers plus a shift axis",
                self.d, self.classes
            )));
        }
        if self.n_bins == 0 {
            return Err(Error::InvalidParam("n_bins must be > 0".into()));
        }
        if !(self.sigma > 0.0) || !(self.sigma_radius > 0.0) || !(self.rho > 0.0) {
            return Err(Error::InvalidParam(
                "rho, sigma, and sigma_radius must all be > 0".into(),
            ));
        }
        if !(self.radius_min > 0.0) || self.radius_max < self.radius_min {
            return Err(Error::InvalidParam(format!(
                "radius range [{}, {}] is invalid",
                self.radius_min, self.radius_max
            )));
        }
        if !(self.shift_factor >= 0.0) {
            return Err(Error::InvalidParam(format!(
                "shift factor must be >= 0, got {}",
                self.shift_factor
            )));
        }
        if !(self.logistic_lambda >= 0.0) || self.logistic_iters == 0 || !(self.logistic_tol > 0.0)
        {
            return Err(Error::InvalidParam(
                "logistic fit settings are out of range".into(),
            ));
        }
        Ok(())
    }
}

/// Pooled calibration outcome for one probability route.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodCalibration {
    pub method: String,
    pub ece_mean: f64,
    pub ece_std: f64,
    /// Count-weighted reliability bins pooled over seeds.
    pub bin_confidence: Vec<f64>,
    pub bin_accuracy: Vec<f64>,
    pub bin_counts: Vec<usize>,
    /// Mean fitted temperature; only the temperature route sets this.
    pub mean_temperature: Option<f64>,
}

/// Calibration outcome for one geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSummary {
    pub geometry: String,
    pub n_bins: usize,
    pub n_seeds: usize,
    pub methods: Vec<MethodCalibration>,
}

impl CalibrationSummary {
    pub fn method(&self, name: &str) -> Option<&MethodCalibration> {
        self.methods.iter().find(|m| m.method == name)
    }
}

#[derive(Clone, Copy)]
enum CalibrationGeometry {
    OriginShifted,
    VaryingRadius,
}

impl CalibrationGeometry {
    fn name(self) -> &'static str {
        match self {
            Self::OriginShifted => "origin_shifted",
            Self::VaryingRadius => "varying_radius",
        }
    }

    fn lane(self) -> u64 {
        match self {
            Self::OriginShifted => 31,
            Self::VaryingRadius => 37,
        }
    }
}

struct CalibrationSeed {
    reports: [CalibrationReport; 3],
    temperature: f64,
}

fn calibration_seed(
    cfg: &CalibrationConfig,
    geom: CalibrationGeometry,
    seed: u64,
) -> Result<CalibrationSeed> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0, geom.lane()));
    let c = cfg.classes;
    let dirs = random_orthonormal(cfg.d, c, &mut rng);

    let radii: Vec<f64> = match geom {
        CalibrationGeometry::OriginShifted => vec![cfg.rho; c],
        CalibrationGeometry::VaryingRadius => linspace(cfg.radius_min, cfg.radius_max, c),
    };
    let centers = Matrix::from_fn(c, cfg.d, |i, j| radii[i] * dirs[(i, j)]);
    let sigma = match geom {
        CalibrationGeometry::OriginShifted => cfg.sigma,
        CalibrationGeometry::VaryingRadius => cfg.sigma_radius,
    };

    let n_per = cfg.n / c;
    let labels: Vec<usize> = (0..cfg.n).map(|i| i / n_per).collect();
    let mut z = Matrix::gaussian(cfg.n, cfg.d, &mut rng).scale(sigma);
    for i in 0..cfg.n {
        for j in 0..cfg.d {
            z[(i, j)] += centers[(labels[i], j)];
        }
    }

    if matches!(geom, CalibrationGeometry::OriginShifted) && cfg.shift_factor > 0.0 {
        // Offset direction orthogonal to every center so no class picks up
        // a deterministic score advantage; the damage to the prototype
        // route then comes purely from support-noise times offset size.
        let w = random_orthogonal_to(&dirs, &mut rng);
        let magnitude = cfg.shift_factor * mean_pairwise_distance(&centers);
        for i in 0..cfg.n {
            for j in 0..cfg.d {
                z[(i, j)] += magnitude * w[(0, j)];
            }
        }
    }

    let (s_idx, q_idx) = stratified_split(&labels, c, &mut rng);
    let s_labels = gather(&labels, &s_idx);
    let q_labels = gather(&labels, &q_idx);
    let y_s = one_hot(&s_labels, c);
    let zs = z.select_rows(&s_idx);
    let zq = z.select_rows(&q_idx);

    let proto = fit_prototypes(&zs, &y_s)?;
    let q_logits = prototype_logits(&proto, &zq)?;
    let rep_proto = ece(&softmax_rows(&q_logits), &q_labels, cfg.n_bins)?;

    let s_logits = prototype_logits(&proto, &zs)?;
    let tf = temperature_fit(&s_logits, &s_labels)?;
    let mut rep_temp = ece(&softmax_rows(&q_logits.scale(1.0 / tf.t)), &q_labels, cfg.n_bins)?;
    rep_temp.temperature = Some(tf.t);

    // Mean-centering the features preconditions the logistic solve when the
    // cloud sits far from the origin; the optimum is unchanged because the
    // unregularized bias absorbs the offset.
    let mu = zs.col_means();
    let neg_mu = mu.scale(-1.0);
    let zc_s = zs.add_row_broadcast(&neg_mu);
    let zc_q = zq.add_row_broadcast(&neg_mu);
    let logit_model = fit_logistic(
        &zc_s,
        &y_s,
        cfg.logistic_lambda,
        cfg.logistic_iters,
        cfg.logistic_tol,
    )?;
    let l_logits = logistic_logits(&logit_model, &zc_q)?;
    let rep_log = ece(&softmax_rows(&l_logits), &q_labels, cfg.n_bins)?;

    Ok(CalibrationSeed {
        reports: [rep_proto, rep_temp, rep_log],
        temperature: tf.t,
    })
}

const CALIBRATION_METHODS: [&str; 3] = ["prototype", "temperature", "logistic"];

/// Run both calibration geometries. Returns one summary per geometry, each
/// holding `prototype`, `temperature`, and `logistic` method entries.
pub fn run_calibration_suite(
    cfg: &CalibrationConfig,
    seeds: &[u64],
    jobs: usize,
) -> Result<Vec<CalibrationSummary>> {
    cfg.validate()?;
    require_seeds(seeds)?;
    let mut out = Vec::with_capacity(2);
    for geom in [CalibrationGeometry::OriginShifted, CalibrationGeometry::VaryingRadius] {
        let per = per_seed(seeds, jobs, |s| calibration_seed(cfg, geom, s))?;
        let mut methods = Vec::with_capacity(3);
        for (mi, name) in CALIBRATION_METHODS.iter().enumerate() {
            let eces: Vec<f64> = per.iter().map(|p| p.reports[mi].ece).collect();
            let (ece_mean, ece_std) = mean_std(&eces);
            let (bin_confidence, bin_accuracy, bin_counts) =
                pool_bins(per.iter().map(|p| &p.reports[mi]), cfg.n_bins);
            let mean_temperature = (mi == 1).then(|| {
                let ts: Vec<f64> = per.iter().map(|p| p.temperature).collect();
                mean_std(&ts).0
            });
            methods.push(MethodCalibration {
                method: (*name).into(),
                ece_mean,
                ece_std,
                bin_confidence,
                bin_accuracy,
                bin_counts,
                mean_temperature,
            });
        }
        out.push(CalibrationSummary {
            geometry: geom.name().into(),
            n_bins: cfg.n_bins,
            n_seeds: seeds.len(),
            methods,
        });
    }
    Ok(out)
}

/// One small closed-form check with a frozen expected value.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkedExampleCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, passed: bool, detail: String) -> WorkedExampleCheck {
    WorkedExampleCheck { name: name.into(), passed, detail }
}

/// Decision boundary of a two-class ridge head on 1-D inputs: the point
/// where both class logits agree.
fn line_ridge_boundary(w: &Matrix, b: &[f64]) -> f64 {
    (b[1] - b[0]) / (w[(0, 0)] - w[(0, 1)])
}

/// Tiny fixtures exercised end to end against hand-computed values: a
/// 1-D two-class line before and after a global shift, and a three-class
/// planar fixture whose first prototype lands inside the others' hull.
pub fn run_worked_examples() -> Result<Vec<WorkedExampleCheck>> {
    let mut out = Vec::new();
    let lam = 0.01;

    // Line fixture: class 0 at {-1, 0}, class 1 at {1, 2}.
    let z = Matrix::from_rows(&[vec![-1.0], vec![0.0], vec![1.0], vec![2.0]]);
    let labels = vec![0usize, 0, 1, 1];
    let y = one_hot(&labels, 2);

    let proto = fit_prototypes(&z, &y)?;
    let (p0, p1) = (proto.prototypes[(0, 0)], proto.prototypes[(1, 0)]);
    out.push(check(
        "line_prototype_means",
        (p0 + 0.5).abs() <= 1e-12 && (p1 - 1.5).abs() <= 1e-12,
        format!("p0={p0} p1={p1} expected -0.5 and 1.5"),
    ));

    let preds = argmax_rows(&prototype_logits(&proto, &z)?);
    out.push(check(
        "line_prototype_accuracy",
        preds == labels,
        format!("preds={preds:?} expected {labels:?}"),
    ));

    let z5 = Matrix::from_fn(4, 1, |i, _| z[(i, 0)] + 5.0);
    let proto5 = fit_prototypes(&z5, &y)?;
    let preds5 = argmax_rows(&prototype_logits(&proto5, &z5)?);
    let acc5 = accuracy(&preds5, &labels);
    out.push(check(
        "line_prototype_shift_collapse",
        preds5 == vec![1, 1, 1, 1] && acc5 == 0.5,
        format!("preds={preds5:?} acc={acc5} expected all class 1 at accuracy 0.5"),
    ));

    let r0 = fit_ridge(&z, &y, lam)?;
    let r5 = fit_ridge(&z5, &y, lam)?;
    let preds_r0 = argmax_rows(&ridge_logits(&r0, &z)?);
    let preds_r5 = argmax_rows(&ridge_logits(&r5, &z5)?);
    let b0 = line_ridge_boundary(&r0.w, &r0.b);
    let b5 = line_ridge_boundary(&r5.w, &r5.b);
    // The regularizer sees the bias, so boundary equivariance is only
    // exact as lambda -> 0; at lambda = 0.01 the drift stays below 0.05.
    out.push(check(
        "line_ridge_shift_equivariance",
        preds_r0 == labels
            && preds_r5 == labels
            && (b5 - b0 - 5.0).abs() <= 0.05
            && b0 > 0.0
            && b0 < 1.0
            && b5 > 5.0
            && b5 < 6.0,
        format!("preds0={preds_r0:?} preds5={preds_r5:?} boundary0={b0:.4} boundary5={b5:.4}"),
    ));

    // Planar fixture: class 0 straddles the axis occupied by classes 1
    // and 2, so its mean falls exactly between their prototypes.
    let hz = Matrix::from_rows(&[
        vec![-3.0, 1.0],
        vec![-3.0, -1.0],
        vec![3.0, 1.0],
        vec![3.0, -1.0],
        vec![-2.0, 0.0],
        vec![-1.0, 0.0],
        vec![1.0, 0.0],
        vec![2.0, 0.0],
    ]);
    let hlabels = vec![0usize, 0, 0, 0, 1, 1, 2, 2];
    let hy = one_hot(&hlabels, 3);

    let hproto = fit_prototypes(&hz, &hy)?;
    let p = &hproto.prototypes;
    let means_ok = p[(0, 0)].abs() <= 1e-12
        && p[(0, 1)].abs() <= 1e-12
        && (p[(1, 0)] + 1.5).abs() <= 1e-12
        && p[(1, 1)].abs() <= 1e-12
        && (p[(2, 0)] - 1.5).abs() <= 1e-12
        && p[(2, 1)].abs() <= 1e-12;
    out.push(check(
        "hull_prototype_means",
        means_ok,
        format!(
            "p0=({},{}) p1=({},{}) p2=({},{}) expected (0,0) (-1.5,0) (1.5,0)",
            p[(0, 0)],
            p[(0, 1)],
            p[(1, 0)],
            p[(1, 1)],
            p[(2, 0)],
            p[(2, 1)]
        ),
    ));

    let (d_ch, weights) = hull_distance(p, 0)?;
    out.push(check(
        "hull_distance_and_weights",
        d_ch <= 1e-9 && (weights[0] - 0.5).abs() <= 1e-9 && (weights[1] - 0.5).abs() <= 1e-9,
        format!("d_ch={d_ch:.3e} weights={weights:?} expected 0 and [0.5, 0.5]"),
    ));

    let hpreds = argmax_rows(&prototype_logits(&hproto, &hz)?);
    let never_first = hpreds.iter().all(|&pr| pr != 0);
    let hacc = accuracy(&hpreds, &hlabels);
    out.push(check(
        "hull_interior_class_never_wins",
        never_first && hacc == 0.5,
        format!("preds={hpreds:?} acc={hacc} expected no class-0 predictions at accuracy 0.5"),
    ));

    let report = flag_interior(p)?;
    out.push(check(
        "hull_interior_flags",
        report.interior_flag == vec![true, false, false],
        format!("flags={:?} expected [true, false, false]", report.interior_flag),
    ));

    // Appending |y| as a third feature makes the split class linearly
    // separable again, and the bias-bearing ridge head recovers it.
    let haug = Matrix::from_fn(8, 3, |i, j| match j {
        0 => hz[(i, 0)],
        1 => hz[(i, 1)],
        _ => hz[(i, 1)].abs(),
    });
    let raug = fit_ridge(&haug, &hy, lam)?;
    let apreds = argmax_rows(&ridge_logits(&raug, &haug)?);
    out.push(check(
        "hull_augmented_ridge_separates",
        apreds == hlabels,
        format!("preds={apreds:?} expected {hlabels:?}"),
    ));

    Ok(out)
}

/// Spearman rank correlation with average ranks for ties. Returns 0 when
/// either side has zero rank variance.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "spearman needs equal-length inputs");
    if x.len() < 2 {
        return 0.0;
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

fn average_ranks(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).expect("ranks need finite values"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        // Tied block [i, j] shares the mean of ranks i+1 ..= j+1.
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[idx[k]] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

/// Render a sweep as CSV: the variable column, then `<track>_mean` and
/// `<track>_std` per track, then `n_seeds`.
pub fn sweep_csv(result: &SweepResult) -> String {
    let mut s = String::new();
    s.push_str(&result.variable);
    for t in &result.tracks {
        s.push_str(&format!(",{name}_mean,{name}_std", name = t.name));
    }
    s.push_str(",n_seeds\n");
    for (i, v) in result.values.iter().enumerate() {
        s.push_str(&format!("{v}"));
        for t in &result.tracks {
            s.push_str(&format!(",{},{}", t.mean[i], t.std[i]));
        }
        s.push_str(&format!(",{}\n", result.n_seeds));
    }
    s
}

/// Per-geometry, per-method ECE summary CSV.
pub fn calibration_csv(summaries: &[CalibrationSummary]) -> String {
    let mut s = String::from("geometry,method,ece_mean,ece_std,mean_temperature,n_seeds\n");
    for g in summaries {
        for m in &g.methods {
            let t = m.mean_temperature.map(|t| t.to_string()).unwrap_or_default();
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                g.geometry, m.method, m.ece_mean, m.ece_std, t, g.n_seeds
            ));
        }
    }
    s
}

/// Pooled reliability-diagram bins, one row per (geometry, method, bin).
pub fn calibration_bins_csv(summaries: &[CalibrationSummary]) -> String {
    let mut s = String::from("geometry,method,bin,confidence,accuracy,count\n");
    for g in summaries {
        for m in &g.methods {
            for b in 0..m.bin_counts.len() {
                s.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    g.geometry, m.method, b, m.bin_confidence[b], m.bin_accuracy[b], m.bin_counts[b]
                ));
            }
        }
    }
    s
}

/// Worked-example results as CSV; details are quoted since they may
/// contain commas.
pub fn worked_examples_csv(checks: &[WorkedExampleCheck]) -> String {
    let mut s = String::from("name,passed,detail\n");
    for c in checks {
        s.push_str(&format!("{},{},{}\n", c.name, c.passed, csv_field(&c.detail)));
    }
    s
}

fn csv_field(raw: &str) -> String {
    if raw.contains(',') || raw.contains('"') || raw.contains('\n') {
        format!("\"{}\"", raw.replace('"', "\"\""))
    } else {
        raw.to_string()
    }
}

/// Pool reliability bins over seeds: counts add, confidence and accuracy
/// are count-weighted means (zero where every seed's bin is empty).
fn pool_bins<'a>(
    reports: impl Iterator<Item = &'a CalibrationReport>,
    n_bins: usize,
) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
    let mut conf = vec![0.0; n_bins];
    let mut acc = vec![0.0; n_bins];
    let mut counts = vec![0usize; n_bins];
    for rep in reports {
        for b in 0..n_bins {
            let w = rep.bin_counts[b] as f64;
            conf[b] += w * rep.bin_confidence[b];
            acc[b] += w * rep.bin_accuracy[b];
            counts[b] += rep.bin_counts[b];
        }
    }
    for b in 0..n_bins {
        if counts[b] > 0 {
            conf[b] /= counts[b] as f64;
            acc[b] /= counts[b] as f64;
        }
    }
    (conf, acc, counts)
}

fn require_seeds(seeds: &[u64]) -> Result<()> {
    if seeds.is_empty() {
        return Err(Error::InvalidParam("seed list is empty".into()));
    }
    Ok(())
}

/// Run `f` once per seed, fanning contiguous seed chunks across at most
/// `jobs` threads, and return outputs in seed order.
fn per_seed<T, F>(seeds: &[u64], jobs: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    let jobs = jobs.max(1).min(seeds.len());
    if jobs <= 1 {
        return seeds.iter().map(|&s| f(s)).collect();
    }
    let chunk = seeds.len().div_ceil(jobs);
    let mut slots: Vec<Option<Result<T>>> = seeds.iter().map(|_| None).collect();
    let f = &f;
    std::thread::scope(|scope| {
        for (seed_chunk, slot_chunk) in seeds.chunks(chunk).zip(slots.chunks_mut(chunk)) {
            scope.spawn(move || {
                for (slot, &seed) in slot_chunk.iter_mut().zip(seed_chunk) {
                    *slot = Some(f(seed));
                }
            });
        }
    });
    slots.into_iter().map(|s| s.expect("seed slot filled by its chunk thread")).collect()
}

/// Mean and sample standard deviation; std is 0 for fewer than two values.
fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn aggregate<T, F>(name: &str, k: usize, bounded: bool, per: &[T], get: F) -> MetricTrack
where
    F: Fn(&T) -> &Vec<f64>,
{
    let mut mean = Vec::with_capacity(k);
    let mut std = Vec::with_capacity(k);
    for i in 0..k {
        let vals: Vec<f64> = per.iter().map(|p| get(p)[i]).collect();
        let (m, s) = mean_std(&vals);
        mean.push(m);
        std.push(s);
    }
    MetricTrack { name: name.into(), mean, std, bounded }
}

/// `k` orthonormal rows in R^d, built by Gram-Schmidt on gaussian draws.
fn random_orthonormal(d: usize, k: usize, rng: &mut ChaCha8Rng) -> Matrix {
    assert!(k <= d, "cannot fit {k} orthonormal rows in dimension {d}");
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(k);
    while rows.len() < k {
        let g = Matrix::gaussian(1, d, rng);
        let mut v = g.row(0).to_vec();
        project_out(&mut v, &rows);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            for vi in &mut v {
                *vi /= norm;
            }
            rows.push(v);
        }
    }
    Matrix::from_rows(&rows)
}

/// A unit row orthogonal to every row of `basis`.
fn random_orthogonal_to(basis: &Matrix, rng: &mut ChaCha8Rng) -> Matrix {
    let d = basis.cols();
    let rows: Vec<Vec<f64>> = (0..basis.rows()).map(|i| basis.row(i).to_vec()).collect();
    loop {
        let g = Matrix::gaussian(1, d, rng);
        let mut v = g.row(0).to_vec();
        project_out(&mut v, &rows);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            for vi in &mut v {
                *vi /= norm;
            }
            return Matrix::from_rows(&[v]);
        }
    }
}

fn project_out(v: &mut [f64], rows: &[Vec<f64>]) {
    for r in rows {
        let dot: f64 = v.iter().zip(r).map(|(a, b)| a * b).sum();
        for (vi, ri) in v.iter_mut().zip(r) {
            *vi -= dot * ri;
        }
    }
}

fn linspace(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    if k == 1 {
        return vec![lo];
    }
    (0..k).map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64).collect()
}

fn mean_pairwise_distance(points: &Matrix) -> f64 {
    let n = points.rows();
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            let d: f64 = (0..points.cols())
                .map(|k| (points[(i, k)] - points[(j, k)]).powi(2))
                .sum::<f64>()
                .sqrt();
            total += d;
            pairs += 1;
        }
    }
    if pairs == 0 {
        0.0
    } else {
        total / pairs as f64
    }
}

fn shift_along(z: &Matrix, dir: &Matrix, t: f64) -> Matrix {
    Matrix::from_fn(z.rows(), z.cols(), |i, j| z[(i, j)] + t * dir[(0, j)])
}

fn one_hot(labels: &[usize], classes: usize) -> Matrix {
    Matrix::from_fn(labels.len(), classes, |i, j| f64::from(labels[i] == j))
}

fn gather(labels: &[usize], idx: &[usize]) -> Vec<usize> {
    idx.iter().map(|&i| labels[i]).collect()
}

fn recall(preds: &[usize], labels: &[usize], class: usize) -> f64 {
    let mut hit = 0usize;
    let mut total = 0usize;
    for (p, l) in preds.iter().zip(labels) {
        if *l == class {
            total += 1;
            hit += usize::from(*p == class);
        }
    }
    if total == 0 {
        0.0
    } else {
        hit as f64 / total as f64
    }
}

/// Per-class half/half split: each class's indices are shuffled and the
/// first half goes to support, the rest to query.
fn stratified_split(
    labels: &[usize],
    classes: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<usize>, Vec<usize>) {
    let mut support = Vec::with_capacity(labels.len() / 2);
    let mut query = Vec::with_capacity(labels.len() - labels.len() / 2);
    for cls in 0..classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == cls).collect();
        idx.shuffle(rng);
        let half = idx.len() / 2;
        support.extend_from_slice(&idx[..half]);
        query.extend_from_slice(&idx[half..]);
    }
    (support, query)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_handles_monotone_ties_and_constants() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let down = [10.0, 8.0, 3.0, 1.0];
        assert!((spearman(&x, &down) + 1.0).abs() <= 1e-12);
        let up = [0.1, 0.2, 0.7, 0.9];
        assert!((spearman(&x, &up) - 1.0).abs() <= 1e-12);

        // Ties on both sides rank identically, correlation stays perfect.
        let tied_x = [1.0, 1.0, 2.0];
        let tied_y = [5.0, 5.0, 9.0];
        assert!((spearman(&tied_x, &tied_y) - 1.0).abs() <= 1e-12);

        let flat = [2.0, 2.0, 2.0, 2.0];
        assert_eq!(spearman(&x, &flat), 0.0);

        // One adjacent swap on an otherwise monotone curve stays strongly
        // negative, so the detection threshold tolerates tiny noise.
        let swapped = [10.0, 8.0, 8.5, 3.0, 2.0, 1.0];
        let grid = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        assert!(spearman(&grid, &swapped) <= -0.9);
    }

    #[test]
    fn average_ranks_split_tied_blocks() {
        let r = average_ranks(&[3.0, 1.0, 3.0, 2.0]);
        assert_eq!(r, vec![3.5, 1.0, 3.5, 2.0]);
    }

    fn small_translation() -> TranslationConfig {
        TranslationConfig {
            n: 240,
            d: 16,
            margin: 6.0,
            t_grid: vec![0.0, 2.5, 5.0],
            lambda: 10.0,
        }
    }

    #[test]
    fn translation_collapses_prototypes_but_not_ridge() {
        let cfg = small_translation();
        let res = run_translation_sweep(&cfg, &[0, 1, 2], 1).unwrap();
        res.validate().unwrap();
        let proto = res.track("proto_acc").unwrap();
        let ridge = res.track("ridge_acc").unwrap();
        assert!(proto.mean[0] >= 0.95, "proto at t=0: {}", proto.mean[0]);
        assert!(proto.mean[2] <= 0.65, "proto at t=5: {}", proto.mean[2]);
        for (i, m) in ridge.mean.iter().enumerate() {
            assert!(*m >= 0.95, "ridge at grid point {i}: {m}");
        }
        assert!(spearman(&res.values, &proto.mean) <= -0.9);
    }

    #[test]
    fn ridge_decisions_absorb_global_translation() {
        // The intercept absorbs a translation exactly in the small-lambda
        // limit: the fitted affine map on shifted data is the unshifted map
        // composed with the shift, so decisions on shifted queries match.
        // At working regularization the absorption is only approximate, so
        // there the check is accuracy stability rather than equal argmax.
        let n = 60;
        let d = 8;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let axis = random_orthonormal(d, 1, &mut rng);
        let half = n / 2;
        let labels: Vec<usize> = (0..n).map(|i| usize::from(i >= half)).collect();
        let mut z = Matrix::gaussian(n, d, &mut rng);
        for i in 0..n {
            let c = if i < half { -3.0 } else { 3.0 };
            for j in 0..d {
                z[(i, j)] += c * axis[(0, j)];
            }
        }
        let (s_idx, q_idx) = stratified_split(&labels, 2, &mut rng);
        let y_s = one_hot(&gather(&labels, &s_idx), 2);
        let q_labels = gather(&labels, &q_idx);

        let mut base_preds = None;
        for t in [0.0, 3.7, -12.0] {
            let shifted = shift_along(&z, &axis, t);
            let model = fit_ridge(&shifted.select_rows(&s_idx), &y_s, 1e-6).unwrap();
            let preds =
                argmax_rows(&ridge_logits(&model, &shifted.select_rows(&q_idx)).unwrap());
            match &base_preds {
                None => base_preds = Some(preds),
                Some(b) => assert_eq!(&preds, b, "decisions changed at offset {t}"),
            }
        }

        // The regularizer shrinks the intercept, so at working strength the
        // boundary lags shifts that are large next to the class margin; hold
        // the accuracy check to moderate offsets.
        for t in [0.0, 3.7, -5.0] {
            let shifted = shift_along(&z, &axis, t);
            let working = fit_ridge(&shifted.select_rows(&s_idx), &y_s, 10.0).unwrap();
            let acc = accuracy(
                &argmax_rows(&ridge_logits(&working, &shifted.select_rows(&q_idx)).unwrap()),
                &q_labels,
            );
            assert!(acc >= 0.9, "working-lambda accuracy {acc} at offset {t}");
        }
    }

    #[test]
    fn translation_sweep_is_deterministic_and_jobs_invariant() {
        let cfg = small_translation();
        let seeds = [0u64, 1, 2, 3];
        let a = run_translation_sweep(&cfg, &seeds, 1).unwrap();
        let b = run_translation_sweep(&cfg, &seeds, 1).unwrap();
        let c = run_translation_sweep(&cfg, &seeds, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn bimodal_hull_height_and_recall_transition() {
        let cfg = BimodalConfig {
            n_per_class: 48,
            d: 8,
            delta_grid: vec![0.0, 4.0, 5.0, 6.0],
            ..BimodalConfig::default()
        };
        let res = run_bimodal_sweep(&cfg, &[0, 1, 2], 1).unwrap();
        res.validate().unwrap();

        let design = res.track("d_ch").unwrap();
        assert_eq!(design.std, vec![0.0; 4]);
        assert!((design.mean[0] - 2.5).abs() <= 1e-12);
        assert!((design.mean[1] - 1.5).abs() <= 1e-12);
        assert_eq!(design.mean[2], 0.0);
        assert_eq!(design.mean[3], 0.0);

        let emp = res.track("d_ch_emp").unwrap();
        assert!((emp.mean[0] - 2.5).abs() <= 0.5, "empirical d_ch at delta=0: {}", emp.mean[0]);

        let pa = res.track("proto_recall_a").unwrap();
        assert!(pa.mean[0] >= 0.9, "recall at delta=0: {}", pa.mean[0]);
        assert!(pa.mean[2] <= 0.1, "recall at delta=5: {}", pa.mean[2]);
        assert!(pa.mean[3] <= 0.1, "recall at delta=6: {}", pa.mean[3]);

        // Ridge scores are linear in support class means: once the class-0
        // mean is inside the hull its recall collapses like the prototype's,
        // while the margin-driven head keeps recovering the class.
        let ra = res.track("ridge_recall_a").unwrap();
        assert!(ra.mean[0] >= 0.8, "ridge recall at delta=0: {}", ra.mean[0]);
        assert!(ra.mean[3] <= 0.5, "ridge recall at delta=6: {}", ra.mean[3]);
        let la = res.track("logistic_recall_a").unwrap();
        for (i, m) in la.mean.iter().enumerate() {
            assert!(*m >= 0.6, "iterative-head recall at grid point {i}: {m}");
        }

        let acc = res.track("proto_acc").unwrap();
        assert!(acc.mean[2] >= 0.5 && acc.mean[2] <= 0.8, "collapsed accuracy: {}", acc.mean[2]);
    }

    #[test]
    fn bimodal_first_design_zero_matches_recall_floor() {
        // The grid index where the designed hull distance first hits zero
        // is also where mean split-class recall drops below 10%.
        let cfg = BimodalConfig {
            n_per_class: 48,
            d: 8,
            delta_grid: (0..=7).map(f64::from).collect(),
            ..BimodalConfig::default()
        };
        let res = run_bimodal_sweep(&cfg, &[0, 1], 1).unwrap();
        let design = res.track("d_ch").unwrap();
        let pa = res.track("proto_recall_a").unwrap();
        let first_zero = design.mean.iter().position(|&v| v == 0.0).unwrap();
        assert_eq!(first_zero, 5);
        for i in 0..res.values.len() {
            if i >= first_zero {
                assert!(pa.mean[i] <= 0.1, "recall {} at index {i}", pa.mean[i]);
            } else {
                assert!(pa.mean[i] >= 0.3, "recall {} at index {i}", pa.mean[i]);
            }
        }
    }

    fn small_calibration() -> CalibrationConfig {
        CalibrationConfig {
            n: 300,
            classes: 5,
            d: 32,
            logistic_iters: 400,
            ..CalibrationConfig::default()
        }
    }

    #[test]
    fn calibration_orders_the_three_routes() {
        let cfg = small_calibration();
        let seeds: Vec<u64> = (0..5).collect();
        let summaries = run_calibration_suite(&cfg, &seeds, 2).unwrap();
        assert_eq!(summaries.len(), 2);
        assert_eq!(summaries[0].geometry, "origin_shifted");
        assert_eq!(summaries[1].geometry, "varying_radius");

        for s in &summaries {
            let p = s.method("prototype").unwrap().ece_mean;
            let t = s.method("temperature").unwrap().ece_mean;
            let l = s.method("logistic").unwrap().ece_mean;
            assert!(p > t && t > l, "{}: proto {p:.3} temp {t:.3} logistic {l:.3}", s.geometry);
            assert!(l <= 0.15, "{}: logistic ece {l:.3}", s.geometry);
        }
        let origin_proto = summaries[0].method("prototype").unwrap();
        assert!(origin_proto.ece_mean >= 0.2, "origin proto ece {}", origin_proto.ece_mean);
    }

    #[test]
    fn calibration_pools_bin_counts_over_seeds() {
        let cfg = small_calibration();
        let seeds = [0u64, 1, 2];
        let summaries = run_calibration_suite(&cfg, &seeds, 1).unwrap();
        // Query half: n/2 points per seed per geometry.
        let expected = seeds.len() * cfg.n / 2;
        for s in &summaries {
            for m in &s.methods {
                assert_eq!(m.bin_counts.len(), cfg.n_bins);
                assert_eq!(m.bin_counts.iter().sum::<usize>(), expected);
            }
        }
        let t = summaries[0].method("temperature").unwrap();
        assert!(t.mean_temperature.unwrap() > 0.0);
        assert!(summaries[0].method("prototype").unwrap().mean_temperature.is_none());
    }

    #[test]
    fn colocated_classes_stay_near_uniform_confidence() {
        // All centers at the origin: prototype scores are pure noise, so
        // confidence hugs 1/C and the calibration gap stays small.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 200;
        let classes = 4;
        let d = 16;
        let labels: Vec<usize> = (0..n).map(|i| i / (n / classes)).collect();
        let z = Matrix::gaussian(n, d, &mut rng);
        let (s_idx, q_idx) = stratified_split(&labels, classes, &mut rng);
        let y_s = one_hot(&gather(&labels, &s_idx), classes);
        let proto = fit_prototypes(&z.select_rows(&s_idx), &y_s).unwrap();
        let probs =
            softmax_rows(&prototype_logits(&proto, &z.select_rows(&q_idx)).unwrap());
        let q_labels = gather(&labels, &q_idx);
        // Prototype noise still inflates confidence a little above 1/C,
        // so the gap is small but not zero.
        let report = ece(&probs, &q_labels, 15).unwrap();
        assert!(report.ece <= 0.35, "ece {}", report.ece);
        let preds = argmax_rows(&probs);
        let acc = accuracy(&preds, &q_labels);
        assert!((0.05..=0.5).contains(&acc), "accuracy {acc}");
    }

    #[test]
    fn worked_examples_all_green() {
        let checks = run_worked_examples().unwrap();
        assert_eq!(checks.len(), 9);
        let mut names: Vec<&str> = checks.iter().map(|c| c.name.as_str()).collect();
        names.dedup();
        assert_eq!(names.len(), 9, "names must be unique");
        for c in &checks {
            assert!(c.passed, "{} failed: {}", c.name, c.detail);
        }
    }

    #[test]
    fn csv_renderers_emit_expected_schemas() {
        let cfg = small_translation();
        let res = run_translation_sweep(&cfg, &[0, 1], 1).unwrap();
        let csv = sweep_csv(&res);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "t,proto_acc_mean,proto_acc_std,ridge_acc_mean,ridge_acc_std,n_seeds"
        );
        assert_eq!(csv.lines().count(), 1 + cfg.t_grid.len());
        let first = csv.lines().nth(1).unwrap();
        assert!(first.starts_with("0,"));
        assert!(first.ends_with(",2"));

        let checks = vec![
            check("a", true, "plain".into()),
            check("b", false, "has, comma and \"quote\"".into()),
        ];
        let wcsv = worked_examples_csv(&checks);
        assert_eq!(wcsv.lines().next().unwrap(), "name,passed,detail");
        assert!(wcsv.contains("a,true,plain"));
        assert!(wcsv.contains("b,false,\"has, comma and \"\"quote\"\"\""));
    }

    #[test]
    fn sweep_validate_catches_malformed_tracks() {
        let cfg = small_translation();
        let mut res = run_translation_sweep(&cfg, &[0], 1).unwrap();
        assert_eq!(res.n_seeds, 1);
        assert!(res.tracks.iter().all(|t| t.std.iter().all(|&s| s == 0.0)));
        res.tracks[0].mean.pop();
        assert!(res.validate().is_err());

        let mut res2 = run_translation_sweep(&cfg, &[0], 1).unwrap();
        res2.tracks[1].mean[0] = 1.7;
        assert!(res2.validate().is_err());
    }

    #[test]
    fn configs_reject_out_of_range_values() {
        let mut t = TranslationConfig::default();
        t.n = 801;
        assert!(t.validate().is_err());
        t.n = 800;
        t.t_grid.clear();
        assert!(t.validate().is_err());

        let mut b = BimodalConfig::default();
        b.sigma = 0.0;
        assert!(b.validate().is_err());
        b = BimodalConfig::default();
        b.d = 2;
        assert!(b.validate().is_err());

        let mut c = CalibrationConfig::default();
        c.n = 501;
        assert!(c.validate().is_err());
        c = CalibrationConfig::default();
        c.n_bins = 0;
        assert!(c.validate().is_err());

        assert!(run_translation_sweep(&TranslationConfig::default(), &[], 1).is_err());
    }
}
