//! Synthetic graph generation and the frozen feature pipeline: symmetric
//! adjacency normalization, SVD-aligned node features, and the hop
//! propagation stack.
//!
//! Graph files are plain text: a `n <count>` header, one `u v` line per
//! undirected edge, an optional `labels` section with one class id per node,
//! and an optional `graph_label <id>` trailer.

use crate::error::{Error, Result};
use crate::numcore::{truncated_svd, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;

/// An undirected graph with optional features and labels.
///
/// Edges are stored as (u, v) with u < v, sorted, without duplicates.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphData {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
    pub node_features: Option<Matrix>,
    pub node_labels: Option<Vec<usize>>,
    pub graph_label: Option<usize>,
}

impl GraphData {
    /// Validates and canonicalizes the edge list.
    pub fn try_new(n: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        let mut canon = Vec::with_capacity(edges.len());
        for (u, v) in edges {
            if u == v {
                return Err(Error::InvalidParam(format!("self-loop on node {u}")));
            }
            if u >= n || v >= n {
                return Err(Error::InvalidParam(format!(
                    "edge ({u}, {v}) out of range for {n} nodes"
                )));
            }
            canon.push((u.min(v), u.max(v)));
        }
        canon.sort_unstable();
        if canon.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParam("duplicate edge in list".into()));
        }
        Ok(GraphData { n, edges: canon, node_features: None, node_labels: None, graph_label: None })
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        let key = (u.min(v), u.max(v));
        self.edges.binary_search(&key).is_ok()
    }
}

/// Stochastic block model: intra-block pairs connect with `p_in`,
/// inter-block with `p_out`. Node labels are block ids.
pub fn generate_sbm(
    n: usize,
    block_sizes: &[usize],
    p_in: f64,
    p_out: f64,
    seed: u64,
) -> Result<GraphData> {
    if block_sizes.iter().sum::<usize>() != n {
        return Err(Error::InvalidParam(format!(
            "block sizes sum to {}, expected n={n}",
            block_sizes.iter().sum::<usize>()
        )));
    }
    if !(0.0..=1.0).contains(&p_out) || !(0.0..=1.0).contains(&p_in) || p_out > p_in {
        return Err(Error::InvalidParam(format!(
            "need 0 <= p_out <= p_in <= 1, got p_in={p_in} p_out={p_out}"
        )));
    }
    let mut labels = Vec::with_capacity(n);
    for (block, &size) in block_sizes.iter().enumerate() {
        labels.extend(std::iter::repeat(block).take(size));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    // Fixed lexicographic pair order keeps the draw sequence reproducible.
    for u in 0..n {
        for v in u + 1..n {
            let p = if labels[u] == labels[v] { p_in } else { p_out };
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let mut g = GraphData::try_new(n, edges)?;
    g.node_labels = Some(labels);
    Ok(g)
}

/// Symmetrically normalized adjacency D^{-1/2} A D^{-1/2}; isolated nodes
/// keep all-zero rows and columns.
pub fn sym_normalize(g: &GraphData) -> Matrix {
    let n = g.n;
    let mut degree = vec![0.0f64; n];
    for &(u, v) in &g.edges {
        degree[u] += 1.0;
        degree[v] += 1.0;
    }
    let inv_sqrt: Vec<f64> =
        degree.iter().map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 }).collect();
    let mut a = Matrix::zeros(n, n);
    for &(u, v) in &g.edges {
        let w = inv_sqrt[u] * inv_sqrt[v];
        a[(u, v)] = w;
        a[(v, u)] = w;
    }
    a
}

/// Frozen d_target-dimensional node features.
///
/// Featureless graphs get U diag(S) of the normalized adjacency; graphs with
/// features split d_target evenly between structure and feature SVDs.
pub fn align_features(
    g: &GraphData,
    d_target: usize,
    power_iters: usize,
    seed: u64,
) -> Result<Matrix> {
    let n = g.n;
    if d_target == 0 || d_target > n {
        return Err(Error::InvalidParam(format!(
            "d_target={d_target} must be in 1..={n} for {n} nodes"
        )));
    }
    let a = sym_normalize(g);
    let scaled = |svd: crate::numcore::Svd| {
        Matrix::from_fn(svd.u.rows(), svd.s.len(), |i, j| svd.u[(i, j)] * svd.s[j])
    };
    match &g.node_features {
        None => Ok(scaled(truncated_svd(&a, d_target, power_iters, seed)?)),
        Some(x) => {
            let d_structure = d_target / 2;
            let d_feature = d_target - d_structure;
            if d_feature > x.cols().min(n) {
                return Err(Error::InvalidParam(format!(
                    "feature SVD rank {d_feature} exceeds feature matrix rank bound {}",
                    x.cols().min(n)
                )));
            }
            let s_block = scaled(truncated_svd(&a, d_structure, power_iters, seed)?);
            let f_block = scaled(truncated_svd(x, d_feature, power_iters, seed.wrapping_add(1))?);
            Ok(Matrix::from_fn(n, d_target, |i, j| {
                if j < d_structure {
                    s_block[(i, j)]
                } else {
                    f_block[(i, j - d_structure)]
                }
            }))
        }
    }
}

/// Frozen list of hop propagations of the input features.
#[derive(Debug, Clone)]
pub struct HopStack {
    /// hops[k] holds the k-step propagation; hops[0] is the input itself.
    pub hops: Vec<Matrix>,
}

pub fn hop_stack(x0: &Matrix, a_norm: &Matrix, ell: usize) -> Result<HopStack> {
    if a_norm.rows() != a_norm.cols() || a_norm.rows() != x0.rows() {
        return Err(Error::ShapeMismatch(format!(
            "adjacency {}x{} vs features {}x{}",
            a_norm.rows(),
            a_norm.cols(),
            x0.rows(),
            x0.cols()
        )));
    }
    let mut hops = Vec::with_capacity(ell + 1);
    hops.push(x0.clone());
    for k in 1..=ell {
        let next = a_norm.matmul(&hops[k - 1]);
        hops.push(next);
    }
    Ok(HopStack { hops })
}

/// Reads the plain-text graph format.
pub fn read_graph_file(path: &Path) -> Result<GraphData> {
    let text = std::fs::read_to_string(path)?;
    parse_graph(&text)
}

pub fn parse_graph(text: &str) -> Result<GraphData> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (ln, header) = lines
        .next()
        .ok_or_else(|| Error::Parse("empty graph file".into()))?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some("n") {
        return Err(Error::Parse(format!("line {}: expected 'n <count>' header", ln + 1)));
    }
    let n: usize = parts
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::Parse(format!("line {}: bad node count", ln + 1)))?;

    let mut edges = Vec::new();
    let mut labels: Option<Vec<usize>> = None;
    let mut graph_label = None;
    let mut mode = "edges";
    for (ln, line) in lines {
        let line = line.trim();
        if line == "labels" {
            if mode != "edges" {
                return Err(Error::Parse(format!("line {}: unexpected 'labels'", ln + 1)));
            }
            mode = "labels";
            labels = Some(Vec::with_capacity(n));
            continue;
        }
        if let Some(rest) = line.strip_prefix("graph_label") {
            let id: usize = rest
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: bad graph label", ln + 1)))?;
            graph_label = Some(id);
            mode = "done";
            continue;
        }
        match mode {
            "edges" => {
                let mut it = line.split_whitespace();
                let parse = |t: Option<&str>| -> Result<usize> {
                    t.and_then(|x| x.parse().ok())
                        .ok_or_else(|| Error::Parse(format!("line {}: bad edge line", ln + 1)))
                };
                let u = parse(it.next())?;
                let v = parse(it.next())?;
                if it.next().is_some() {
                    return Err(Error::Parse(format!("line {}: trailing tokens", ln + 1)));
                }
                edges.push((u, v));
            }
            "labels" => {
                let id: usize = line
                    .parse()
                    .map_err(|_| Error::Parse(format!("line {}: bad label", ln + 1)))?;
                labels.as_mut().unwrap().push(id);
            }
            _ => {
                return Err(Error::Parse(format!(
                    "line {}: content after graph_label",
                    ln + 1
                )))
            }
        }
    }
    if let Some(ref l) = labels {
        if l.len() != n {
            return Err(Error::Parse(format!("expected {n} labels, found {}", l.len())));
        }
    }
    let mut g = GraphData::try_new(n, edges)?;
    g.node_labels = labels;
    g.graph_label = graph_label;
    Ok(g)
}

pub fn write_graph_file(g: &GraphData, path: &Path) -> Result<()> {
    let mut out = format!("n {}\n", g.n);
    for &(u, v) in &g.edges {
        out.push_str(&format!("{u} {v}\n"));
    }
    if let Some(ref labels) = g.node_labels {
        out.push_str("labels\n");
        for l in labels {
            out.push_str(&format!("{l}\n"));
        }
    }
    if let Some(gl) = g.graph_label {
        out.push_str(&format!("graph_label {gl}\n"));
    }
    std::fs::write(path, out)?;
    Ok(())
}
