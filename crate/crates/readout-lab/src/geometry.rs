//! Prototype hull geometry: distances to the convex hull of the other
//! classes, soft-inclusion margins, and the 2-D interior-flagging audit.
//!
//! The hull distance solves min over simplex weights w of ||A^T w - p||
//! with accelerated projected gradient. The problem has at most C-1
//! variables, so a certifiable first-order method beats anything fancier.

use crate::error::{Error, Result};
use crate::numcore::{pca_project, solve_spd, sym_eigen, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const KKT_TOL: f64 = 1e-8;
const MAX_ITERS: usize = 10_000;

/// Per-class hull geometry. All vectors are indexed by class.
#[derive(Debug, Clone)]
pub struct HullReport {
    /// Euclidean distance from each prototype to the others' hull.
    pub d_ch: Vec<f64>,
    /// Optimal simplex weights per class, over the other classes in
    /// ascending class order.
    pub weights: Vec<Vec<f64>>,
    /// d_ch divided by the mean pairwise prototype distance.
    pub d_ch_norm: Vec<f64>,
    /// True when the class sits strictly deeper than every hull vertex.
    pub interior_flag: Vec<bool>,
    /// Classes whose 2-D projections are hull vertices.
    pub hull_classes: Vec<usize>,
    /// Mean distance over unordered prototype pairs.
    pub mean_pairwise: f64,
}

/// Euclidean projection onto the probability simplex (sort-based).
pub fn simplex_project(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - 1.0) / (j + 1) as f64;
        if u - candidate > 0.0 {
            tau = candidate;
        }
    }
    v.iter().map(|&x| (x - tau).max(0.0)).collect()
}

/// Distance from prototype `c` to the convex hull of the other prototypes,
/// with the optimal simplex weights over those others (ascending order).
pub fn hull_distance(p: &Matrix, c: usize) -> Result<(f64, Vec<f64>)> {
    let (classes, d) = (p.rows(), p.cols());
    if classes < 2 {
        return Err(Error::InvalidParam(format!(
            "hull distance needs at least 2 prototypes, got {classes}"
        )));
    }
    if c >= classes {
        return Err(Error::InvalidParam(format!(
            "class {c} out of range for {classes} prototypes"
        )));
    }
    let others: Vec<usize> = (0..classes).filter(|&i| i != c).collect();
    let m = others.len();
    let a = Matrix::from_fn(m, d, |i, j| p[(others[i], j)]);
    let target = Matrix::from_fn(1, d, |_, j| p[(c, j)]);

    // f(w) = 0.5 ||A^T w - p||^2; grad = G w - q with G = A A^T, q = A p.
    let gram = a.matmul_nt(&a);
    let q = a.matmul_nt(&target);
    let (vals, _) = sym_eigen(&gram);
    let lip = vals[0].max(1e-12);

    let grad_of = |w: &[f64]| -> Vec<f64> {
        (0..m)
            .map(|i| (0..m).map(|j| gram[(i, j)] * w[j]).sum::<f64>() - q[(i, 0)])
            .collect()
    };
    let objective = |w: &[f64]| -> f64 {
        let mut sq = 0.0;
        for j in 0..d {
            let mut r = -target[(0, j)];
            for i in 0..m {
                r += w[i] * a[(i, j)];
            }
            sq += r * r;
        }
        0.5 * sq
    };
    let kkt_residual = |w: &[f64], g: &[f64]| -> f64 {
        let stepped: Vec<f64> = w.iter().zip(g).map(|(wi, gi)| wi - gi).collect();
        let proj = simplex_project(&stepped);
        w.iter()
            .zip(&proj)
            .map(|(wi, pi)| (wi - pi) * (wi - pi))
            .sum::<f64>()
            .sqrt()
    };

    let mut w = vec![1.0 / m as f64; m];
    let mut y = w.clone();
    let mut theta = 1.0f64;
    let mut f_prev = objective(&w);
    let mut residual = f64::INFINITY;

    for iter in 0..MAX_ITERS {
        let g_at_w = grad_of(&w);
        residual = kkt_residual(&w, &g_at_w);
        if residual <= KKT_TOL {
            let dist = (2.0 * objective(&w)).sqrt();
            return Ok((dist, w));
        }
        // Momentum restarts compare objectives, which drowns in rounding
        // noise once the iterate is within ~1e-8 of the optimum. When the
        // active face looks settled, solve the face-restricted QP exactly
        // and accept it only if it certifies.
        if residual <= 1e-4 || iter % 100 == 99 {
            if let Some(polished) = active_face_polish(&gram, &q, &w) {
                let gp = grad_of(&polished);
                if kkt_residual(&polished, &gp) <= KKT_TOL {
                    let dist = (2.0 * objective(&polished)).sqrt();
                    return Ok((dist, polished));
                }
            }
        }

        let g = grad_of(&y);
        let stepped: Vec<f64> =
            y.iter().zip(&g).map(|(yi, gi)| yi - gi / lip).collect();
        let w_next = simplex_project(&stepped);
        let f_next = objective(&w_next);
        if f_next > f_prev {
            // Momentum overshot; restart from the last good iterate.
            y = w.clone();
            theta = 1.0;
            f_prev = objective(&w);
            continue;
        }
        let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        let beta = (theta - 1.0) / theta_next;
        y = w_next
            .iter()
            .zip(&w)
            .map(|(nw, ow)| nw + beta * (nw - ow))
            .collect();
        w = w_next;
        theta = theta_next;
        f_prev = f_next;
    }
    Err(Error::NoConvergence { iterations: MAX_ITERS, residual })
}

/// Exact minimizer of the hull objective restricted to the face spanned by
/// the positive entries of `w`, via a null-space reduction of the
/// sum-to-one constraint. Returns None when the face guess is infeasible.
fn active_face_polish(gram: &Matrix, q: &Matrix, w: &[f64]) -> Option<Vec<f64>> {
    let m = w.len();
    let support: Vec<usize> = (0..m).filter(|&i| w[i] > 1e-10).collect();
    let k = support.len();
    let mut out = vec![0.0; m];
    match k {
        0 => return None,
        1 => {
            out[support[0]] = 1.0;
            return Some(out);
        }
        _ => {}
    }
    let uni = 1.0 / k as f64;
    let gs = |i: usize, j: usize| gram[(support[i], support[j])];
    // Gradient at the uniform face point; the reduction basis is e_i - e_last.
    let grad0: Vec<f64> = (0..k)
        .map(|i| (0..k).map(|j| gs(i, j) * uni).sum::<f64>() - q[(support[i], 0)])
        .collect();
    let rhs = Matrix::from_fn(k - 1, 1, |i, _| grad0[k - 1] - grad0[i]);
    let mut reduced = Matrix::from_fn(k - 1, k - 1, |i, j| {
        gs(i, j) - gs(i, k - 1) - gs(k - 1, j) + gs(k - 1, k - 1)
    });
    // Duplicate prototypes make the face objective flat; a vanishing ridge
    // keeps the factorization alive without moving the certified residual.
    let trace: f64 = (0..k - 1).map(|i| reduced[(i, i)]).sum();
    for i in 0..k - 1 {
        reduced[(i, i)] += 1e-12 * trace.max(1e-12);
    }
    let u = solve_spd(&reduced, &rhs).ok()?;
    let mut last = uni;
    for i in 0..k - 1 {
        last -= u[(i, 0)];
    }
    for (idx, &s) in support.iter().enumerate() {
        let val = if idx < k - 1 { uni + u[(idx, 0)] } else { last };
        if val < 0.0 {
            return None;
        }
        out[s] = val;
    }
    Some(out)
}

/// Max observed score advantage of class `c` over sampled queries with
/// norm at most `r`.
pub fn eps_inclusion_margin(
    p: &Matrix,
    c: usize,
    r: f64,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::InvalidParam(format!("query-norm bound must be > 0, got {r}")));
    }
    let (classes, d) = (p.rows(), p.cols());
    if classes < 2 || c >= classes {
        return Err(Error::InvalidParam(format!(
            "class {c} invalid for {classes} prototypes"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = f64::NEG_INFINITY;
    for _ in 0..trials {
        // Uniform in the ball: normalized Gaussian direction, radius r u^(1/d).
        let mut z: Vec<f64> =
            (0..d).map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)).collect();
        let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
        let radius = r * rng.random::<f64>().powf(1.0 / d as f64);
        for v in &mut z {
            *v *= radius / norm;
        }
        let score = |cls: usize| (0..d).map(|j| z[j] * p[(cls, j)]).sum::<f64>();
        let own = score(c);
        let rival = (0..classes)
            .filter(|&k| k != c)
            .map(score)
            .fold(f64::NEG_INFINITY, f64::max);
        best = best.max(own - rival);
    }
    Ok(best)
}

/// Full hull audit: per-class distances, normalized distances, and the 2-D
/// projection flagging pass.
///
/// Collinear projections degrade the hull to a segment whose two extreme
/// classes still define it; the degeneracy error is reserved for prototype
/// sets that collapse to a single point.
pub fn flag_interior(p: &Matrix) -> Result<HullReport> {
    let (classes, d) = (p.rows(), p.cols());
    if classes < 3 {
        return Err(Error::InvalidParam(format!(
            "interior flagging needs at least 3 classes, got {classes}"
        )));
    }
    if d < 2 {
        return Err(Error::InvalidParam(format!(
            "interior flagging needs at least 2 embedding dims, got {d}"
        )));
    }

    let mut d_ch = Vec::with_capacity(classes);
    let mut weights = Vec::with_capacity(classes);
    for c in 0..classes {
        let (dist, w) = hull_distance(p, c)?;
        d_ch.push(dist);
        weights.push(w);
    }

    let mut mean_pairwise = 0.0;
    for i in 0..classes {
        for j in i + 1..classes {
            let mut sq = 0.0;
            for k in 0..d {
                let diff = p[(i, k)] - p[(j, k)];
                sq += diff * diff;
            }
            mean_pairwise += sq.sqrt();
        }
    }
    mean_pairwise /= (classes * (classes - 1) / 2) as f64;
    if mean_pairwise <= 1e-12 {
        return Err(Error::Degenerate(
            "all prototypes coincide; hull audit undefined".into(),
        ));
    }
    let d_ch_norm: Vec<f64> = d_ch.iter().map(|v| v / mean_pairwise).collect();

    let coords = pca_project(p, 2)?;
    let hull_classes = hull_vertices(&coords)?;
    let min_vertex = hull_classes
        .iter()
        .map(|&c| d_ch[c])
        .fold(f64::INFINITY, f64::min);
    let interior_flag: Vec<bool> = d_ch.iter().map(|&v| v < min_vertex).collect();

    Ok(HullReport { d_ch, weights, d_ch_norm, interior_flag, hull_classes, mean_pairwise })
}

/// Andrew's monotone chain over the 2-D rows of `coords`, returning row
/// indices of hull vertices. Points interior to hull edges are excluded;
/// collinear inputs yield their two extremes.
fn hull_vertices(coords: &Matrix) -> Result<Vec<usize>> {
    let n = coords.rows();
    let scale = coords.max_abs().max(1e-300);
    let turn_tol = 1e-9 * scale * scale;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        (coords[(i, 0)], coords[(i, 1)])
            .partial_cmp(&(coords[(j, 0)], coords[(j, 1)]))
            .unwrap()
    });

    let cross = |o: usize, a: usize, b: usize| -> f64 {
        (coords[(a, 0)] - coords[(o, 0)]) * (coords[(b, 1)] - coords[(o, 1)])
            - (coords[(a, 1)] - coords[(o, 1)]) * (coords[(b, 0)] - coords[(o, 0)])
    };

    let chain = |iter: &mut dyn Iterator<Item = usize>| -> Vec<usize> {
        let mut out: Vec<usize> = Vec::new();
        for idx in iter {
            while out.len() >= 2
                && cross(out[out.len() - 2], out[out.len() - 1], idx) <= turn_tol
            {
                out.pop();
            }
            out.push(idx);
        }
        out
    };
    let lower = chain(&mut order.iter().copied());
    let upper = chain(&mut order.iter().rev().copied());

    let mut vertices: Vec<usize> = Vec::new();
    for &v in lower.iter().chain(upper.iter()) {
        if !vertices.contains(&v) {
            vertices.push(v);
        }
    }
    // Distinct coordinates among the vertices; duplicates mean collapse.
    let mut distinct = 0;
    'outer: for (i, &a) in vertices.iter().enumerate() {
        for &b in vertices.iter().take(i) {
            let dx = coords[(a, 0)] - coords[(b, 0)];
            let dy = coords[(a, 1)] - coords[(b, 1)];
            if (dx * dx + dy * dy).sqrt() <= 1e-12 * scale {
                continue 'outer;
            }
        }
        distinct += 1;
    }
    if distinct < 2 {
        return Err(Error::Degenerate(
            "projected prototypes collapse to a point; no hull to flag against".into(),
        ));
    }
    vertices.sort_unstable();
    Ok(vertices)
}

/// Distance from `point` to the segment [a, b]. Exact arithmetic oracle for
/// three-prototype configurations.
pub fn segment_distance(point: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let d = point.len();
    let mut ab_sq = 0.0;
    let mut ap_dot = 0.0;
    for j in 0..d {
        let ab = b[j] - a[j];
        ab_sq += ab * ab;
        ap_dot += (point[j] - a[j]) * ab;
    }
    let t = if ab_sq <= 0.0 { 0.0 } else { (ap_dot / ab_sq).clamp(0.0, 1.0) };
    let mut sq = 0.0;
    for j in 0..d {
        let closest = a[j] + t * (b[j] - a[j]);
        let diff = point[j] - closest;
        sq += diff * diff;
    }
    sq.sqrt()
}
