//! Reverse-mode automatic differentiation over matrices.
//!
//! The tape records a program as a flat list of nodes in construction order,
//! which is already a topological order, so one reverse sweep accumulates
//! every gradient. The operation set is closed: matrix product (with
//! transpose flags), addition (with one-row broadcast), scalar scale, bias
//! column append, elementwise product, ReLU, softmax cross-entropy with label
//! smoothing targets, row-mean pooling over index groups, a fused hop
//! attention block, and an SPD solve.
//!
//! Invariants:
//! - gradients are written only during [`Tape::backward`], additively, and
//!   each node's gradient is complete before its own parents are visited;
//! - nodes not reachable from the root report a zero gradient;
//! - the SPD solve caches its Cholesky factor so the backward pass reuses it:
//!   for `X = K^{-1} B` the adjoints are `B_bar = K^{-1} X_bar` and
//!   `K_bar = -B_bar X^T` (exact for symmetric `K`, which is the only
//!   supported construction: a Gram matrix plus a ridge).

use crate::error::{Error, Result};
use crate::numcore::{Cholesky, Matrix};

pub type NodeId = usize;

enum Op {
    /// Input node. `constant` nodes are still differentiated through (their
    /// gradient is simply never read); the flag only documents intent.
    Leaf,
    MatMul { a: NodeId, b: NodeId, ta: bool, tb: bool },
    Add { a: NodeId, b: NodeId, broadcast_b: bool },
    Scale { a: NodeId, factor: f64 },
    AppendBiasCol { a: NodeId },
    Hadamard { a: NodeId, b: NodeId },
    Relu { a: NodeId },
    /// Mean of the rows in each group; `groups[g]` lists input row indices.
    RowMeanPool { a: NodeId, groups: Vec<Vec<usize>> },
    /// Scalar loss: mean over rows of the cross-entropy between
    /// `softmax(logits)` and fixed target rows. `probs` caches the softmax.
    SoftmaxXentLs { logits: NodeId, targets: Matrix, probs: Matrix },
    /// Per-row attention over hop channels with the query as attention probe:
    /// `out_i = sum_k alpha_{ik} hops[k]_i`, `alpha_i = softmax_k(<q_i, h_ki>/sqrt(d))`.
    HopAttention { query: NodeId, hops: Vec<NodeId>, alpha: Matrix },
    /// `X = K^{-1} B`; the factor is cached for the adjoint solve.
    SolveSpd { k: NodeId, b: NodeId, factor: Cholesky },
}

struct Node {
    value: Matrix,
    op: Op,
}

pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Matrix>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), grads: Vec::new() }
    }

    fn push(&mut self, value: Matrix, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        self.grads.push(None);
        self.nodes.len() - 1
    }

    /// Inserts a differentiable input.
    pub fn leaf(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Leaf)
    }

    /// Inserts a non-learned input (targets, masks, selection matrices).
    /// Structurally identical to [`Tape::leaf`]; named for call-site clarity.
    pub fn constant(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id].value
    }

    /// Gradient accumulated by the last backward pass; zeros if unreachable.
    pub fn grad(&self, id: NodeId) -> Matrix {
        match &self.grads[id] {
            Some(g) => g.clone(),
            None => Matrix::zeros(self.nodes[id].value.rows(), self.nodes[id].value.cols()),
        }
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.matmul_flags(a, b, false, false)
    }

    /// `value(a)^T * value(b)`
    pub fn matmul_tn(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.matmul_flags(a, b, true, false)
    }

    /// `value(a) * value(b)^T`
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.matmul_flags(a, b, false, true)
    }

    pub fn matmul_flags(&mut self, a: NodeId, b: NodeId, ta: bool, tb: bool) -> NodeId {
        let v = Matrix::gemm(&self.nodes[a].value, ta, &self.nodes[b].value, tb);
        self.push(v, Op::MatMul { a, b, ta, tb })
    }

    /// Elementwise sum; if `b` has a single row it broadcasts over rows of `a`.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (&self.nodes[a].value, &self.nodes[b].value);
        let broadcast = vb.rows() == 1 && va.rows() != 1;
        let v = if broadcast { va.add_row_broadcast(vb) } else { va.add(vb) };
        self.push(v, Op::Add { a, b, broadcast_b: broadcast })
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let v = self.nodes[a].value.scale(factor);
        self.push(v, Op::Scale { a, factor })
    }

    pub fn append_bias_col(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.append_ones_col();
        self.push(v, Op::AppendBiasCol { a })
    }

    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.nodes[a].value.hadamard(&self.nodes[b].value);
        self.push(v, Op::Hadamard { a, b })
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let src = &self.nodes[a].value;
        let v = Matrix::from_fn(src.rows(), src.cols(), |i, j| src[(i, j)].max(0.0));
        self.push(v, Op::Relu { a })
    }

    pub fn row_mean_pool(&mut self, a: NodeId, groups: Vec<Vec<usize>>) -> NodeId {
        let src = &self.nodes[a].value;
        let d = src.cols();
        let mut v = Matrix::zeros(groups.len(), d);
        for (g, rows) in groups.iter().enumerate() {
            assert!(!rows.is_empty(), "row_mean_pool group {g} is empty");
            for &r in rows {
                for j in 0..d {
                    v[(g, j)] += src[(r, j)];
                }
            }
            let inv = 1.0 / rows.len() as f64;
            for j in 0..d {
                v[(g, j)] *= inv;
            }
        }
        self.push(v, Op::RowMeanPool { a, groups })
    }

    /// Scalar node: mean cross-entropy of `softmax(logits)` against fixed
    /// target rows (already smoothed by the caller; each row sums to one).
    pub fn softmax_xent(&mut self, logits: NodeId, targets: Matrix) -> NodeId {
        let z = &self.nodes[logits].value;
        assert_eq!((z.rows(), z.cols()), (targets.rows(), targets.cols()), "xent shapes");
        let n = z.rows();
        let c = z.cols();
        let mut probs = Matrix::zeros(n, c);
        let mut loss = 0.0;
        for i in 0..n {
            let row = z.row(i);
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            for j in 0..c {
                let e = (row[j] - mx).exp();
                probs[(i, j)] = e;
                denom += e;
            }
            let log_denom = denom.ln();
            for j in 0..c {
                probs[(i, j)] /= denom;
                // log softmax = (z - mx) - log denom
                loss -= targets[(i, j)] * ((row[j] - mx) - log_denom);
            }
        }
        loss /= n as f64;
        let v = Matrix::from_vec(1, 1, vec![loss]);
        self.push(v, Op::SoftmaxXentLs { logits, targets, probs })
    }

    /// Fused hop-attention block over `hops.len()` channels of shape n x d.
    pub fn hop_attention(&mut self, query: NodeId, hops: Vec<NodeId>) -> NodeId {
        let q = &self.nodes[query].value;
        let (n, d) = (q.rows(), q.cols());
        let l = hops.len();
        assert!(l >= 1, "hop attention needs at least one hop");
        for &h in &hops {
            let hv = &self.nodes[h].value;
            assert_eq!((hv.rows(), hv.cols()), (n, d), "hop shape");
        }
        let scale = 1.0 / (d as f64).sqrt();
        let mut alpha = Matrix::zeros(n, l);
        for i in 0..n {
            let qrow = q.row(i);
            let mut mx = f64::NEG_INFINITY;
            for (k, &h) in hops.iter().enumerate() {
                let hrow = self.nodes[h].value.row(i);
                let s: f64 = qrow.iter().zip(hrow).map(|(a, b)| a * b).sum::<f64>() * scale;
                alpha[(i, k)] = s;
                mx = mx.max(s);
            }
            let mut denom = 0.0;
            for k in 0..l {
                let e = (alpha[(i, k)] - mx).exp();
                alpha[(i, k)] = e;
                denom += e;
            }
            for k in 0..l {
                alpha[(i, k)] /= denom;
            }
        }
        let mut out = Matrix::zeros(n, d);
        for i in 0..n {
            for (k, &h) in hops.iter().enumerate() {
                let a = alpha[(i, k)];
                let hrow = self.nodes[h].value.row(i);
                let orow = out.row_mut(i);
                for j in 0..d {
                    orow[j] += a * hrow[j];
                }
            }
        }
        self.push(out, Op::HopAttention { query, hops, alpha })
    }

    /// `X = K^{-1} B` with `K` symmetric positive definite.
    pub fn solve_spd(&mut self, k: NodeId, b: NodeId) -> Result<NodeId> {
        let factor = Cholesky::factor(&self.nodes[k].value)?;
        let x = factor.solve(&self.nodes[b].value);
        Ok(self.push(x, Op::SolveSpd { k, b, factor }))
    }

    /// Reverse sweep from a 1x1 root node. Clears previous gradients.
    pub fn backward(&mut self, root: NodeId) -> Result<()> {
        let rv = &self.nodes[root].value;
        if rv.rows() != 1 || rv.cols() != 1 {
            return Err(Error::InvalidParam(format!(
                "backward root must be scalar, got {}x{}",
                rv.rows(),
                rv.cols()
            )));
        }
        for g in self.grads.iter_mut() {
            *g = None;
        }
        self.grads[root] = Some(Matrix::from_vec(1, 1, vec![1.0]));

        for id in (0..=root).rev() {
            let Some(g) = self.grads[id].clone() else { continue };
            match &self.nodes[id].op {
                Op::Leaf => {}
                Op::MatMul { a, b, ta, tb } => {
                    let (a, b, ta, tb) = (*a, *b, *ta, *tb);
                    let va = &self.nodes[a].value;
                    let vb = &self.nodes[b].value;
                    let (ga, gb) = match (ta, tb) {
                        (false, false) => {
                            (Matrix::gemm(&g, false, vb, true), Matrix::gemm(va, true, &g, false))
                        }
                        (true, false) => {
                            (Matrix::gemm(vb, false, &g, true), Matrix::gemm(va, false, &g, false))
                        }
                        (false, true) => {
                            (Matrix::gemm(&g, false, vb, false), Matrix::gemm(&g, true, va, false))
                        }
                        (true, true) => (
                            Matrix::gemm(vb, true, &g, true),
                            Matrix::gemm(&g, true, va, true),
                        ),
                    };
                    self.accumulate(a, ga);
                    self.accumulate(b, gb);
                }
                Op::Add { a, b, broadcast_b } => {
                    let (a, b, broadcast) = (*a, *b, *broadcast_b);
                    self.accumulate(a, g.clone());
                    if broadcast {
                        let mut gb = Matrix::zeros(1, g.cols());
                        for i in 0..g.rows() {
                            for j in 0..g.cols() {
                                gb[(0, j)] += g[(i, j)];
                            }
                        }
                        self.accumulate(b, gb);
                    } else {
                        self.accumulate(b, g);
                    }
                }
                Op::Scale { a, factor } => {
                    let (a, factor) = (*a, *factor);
                    self.accumulate(a, g.scale(factor));
                }
                Op::AppendBiasCol { a } => {
                    let a = *a;
                    let cols = g.cols() - 1;
                    let ga = Matrix::from_fn(g.rows(), cols, |i, j| g[(i, j)]);
                    self.accumulate(a, ga);
                }
                Op::Hadamard { a, b } => {
                    let (a, b) = (*a, *b);
                    let ga = g.hadamard(&self.nodes[b].value);
                    let gb = g.hadamard(&self.nodes[a].value);
                    self.accumulate(a, ga);
                    self.accumulate(b, gb);
                }
                Op::Relu { a } => {
                    let a = *a;
                    let va = &self.nodes[a].value;
                    let ga =
                        Matrix::from_fn(g.rows(), g.cols(), |i, j| {
                            if va[(i, j)] > 0.0 {
                                g[(i, j)]
                            } else {
                                0.0
                            }
                        });
                    self.accumulate(a, ga);
                }
                Op::RowMeanPool { a, groups } => {
                    let a = *a;
                    let src = &self.nodes[a].value;
                    let mut ga = Matrix::zeros(src.rows(), src.cols());
                    for (gi, rows) in groups.iter().enumerate() {
                        let inv = 1.0 / rows.len() as f64;
                        for &r in rows {
                            for j in 0..g.cols() {
                                ga[(r, j)] += g[(gi, j)] * inv;
                            }
                        }
                    }
                    self.accumulate(a, ga);
                }
                Op::SoftmaxXentLs { logits, targets, probs } => {
                    let logits = *logits;
                    let n = probs.rows() as f64;
                    let upstream = g[(0, 0)];
                    let gl = Matrix::from_fn(probs.rows(), probs.cols(), |i, j| {
                        upstream * (probs[(i, j)] - targets[(i, j)]) / n
                    });
                    self.accumulate(logits, gl);
                }
                Op::HopAttention { query, hops, alpha } => {
                    let query = *query;
                    let hops = hops.clone();
                    let alpha = alpha.clone();
                    let q = self.nodes[query].value.clone();
                    let (n, d) = (q.rows(), q.cols());
                    let l = hops.len();
                    let scale = 1.0 / (d as f64).sqrt();

                    // dL/d alpha_{ik} = <g_i, h_ki>; softmax backward gives
                    // dL/d s_{ik} = alpha_{ik} (galpha_{ik} - sum_k' alpha galpha).
                    let mut gscore = Matrix::zeros(n, l);
                    for i in 0..n {
                        let mut galpha = vec![0.0; l];
                        for (k, &h) in hops.iter().enumerate() {
                            let hrow = self.nodes[h].value.row(i);
                            galpha[k] =
                                g.row(i).iter().zip(hrow).map(|(a, b)| a * b).sum::<f64>();
                        }
                        let dot: f64 =
                            (0..l).map(|k| alpha[(i, k)] * galpha[k]).sum();
                        for k in 0..l {
                            gscore[(i, k)] = alpha[(i, k)] * (galpha[k] - dot);
                        }
                    }
                    let mut gq = Matrix::zeros(n, d);
                    for (k, &h) in hops.iter().enumerate() {
                        let hv = self.nodes[h].value.clone();
                        let mut gh = Matrix::zeros(n, d);
                        for i in 0..n {
                            let a = alpha[(i, k)];
                            let gs = gscore[(i, k)] * scale;
                            for j in 0..d {
                                // weighted-sum path + score path
                                gh[(i, j)] = a * g[(i, j)] + gs * q[(i, j)];
                                gq[(i, j)] += gs * hv[(i, j)];
                            }
                        }
                        self.accumulate(h, gh);
                    }
                    self.accumulate(query, gq);
                }
                Op::SolveSpd { k, b, factor } => {
                    let (k, b) = (*k, *b);
                    let x = self.nodes[id].value.clone();
                    let gb = factor.solve(&g);
                    let gk = Matrix::gemm(&gb, false, &x, true).scale(-1.0);
                    self.accumulate(b, gb);
                    self.accumulate(k, gk);
                }
            }
        }
        Ok(())
    }

    fn accumulate(&mut self, id: NodeId, g: Matrix) {
        match &mut self.grads[id] {
            Some(existing) => *existing = existing.add(&g),
            slot @ None => *slot = Some(g),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}
