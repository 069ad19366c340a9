//! Trainable encoders and the episodic meta-training loop.
//!
//! Two encoder variants share a residual 3-layer MLP head: `Mlp` reads hop-0
//! features only, `HopAttention` first mixes the hop stack per node with
//! scaled-dot attention probed by a projection of hop-0. Each optimizer step
//! samples an episode, fits the ridge head on the support rows inside the
//! tape, scores the query rows, and backpropagates the label-smoothed
//! cross-entropy through the closed-form solve.
//!
//! The optimizer is adaptive-moment with decoupled weight decay, cosine lr
//! annealing, and global-norm gradient clipping. Every random draw descends
//! from the config seed, so runs are bit-reproducible.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint};

use crate::episodes::{
    sample_edge_episode, sample_graph_episode, sample_node_episode, Episode, ExampleRef,
    TaskKind,
};
use crate::error::{Error, Result};
use crate::graphkit::GraphData;
use crate::numcore::{Matrix, NodeId, Tape};
use crate::readouts::{accuracy, argmax_rows, fit_prototypes, prototype_logits};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderVariant {
    Mlp,
    HopAttention,
}

/// All learnable weights. Biases are stored as 1-row matrices so they ride
/// the tape's broadcasting `add`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub variant: EncoderVariant,
    /// One d_in x d_h projection per hop (HopAttention only; empty for Mlp).
    pub hop_proj: Vec<Matrix>,
    /// Hop-0 query projection, d_in x d_h (HopAttention only).
    pub query_proj: Option<Matrix>,
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
    pub w3: Matrix,
    pub b3: Matrix,
    pub dropout: f64,
}

/// Uniform fan-in init: entries of U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
fn uniform_init(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let a = 1.0 / (rows as f64).sqrt();
    let mut m = Matrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = (rng.random::<f64>() * 2.0 - 1.0) * a;
        }
    }
    m
}

impl EncoderParams {
    pub fn new_mlp(
        d_in: usize,
        d_hidden: usize,
        d_z: usize,
        dropout: f64,
        seed: u64,
    ) -> Result<Self> {
        if d_in == 0 || d_hidden == 0 || d_z == 0 {
            return Err(Error::InvalidParam("encoder dimensions must be positive".into()));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::InvalidParam(format!("dropout {dropout} outside [0, 1)")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(EncoderParams {
            variant: EncoderVariant::Mlp,
            hop_proj: Vec::new(),
            query_proj: None,
            w1: uniform_init(d_in, d_hidden, &mut rng),
            b1: Matrix::zeros(1, d_hidden),
            w2: uniform_init(d_hidden, d_hidden, &mut rng),
            b2: Matrix::zeros(1, d_hidden),
            w3: uniform_init(d_hidden, d_z, &mut rng),
            b3: Matrix::zeros(1, d_z),
            dropout,
        })
    }

    pub fn new_hop_attention(
        d_in: usize,
        n_hops: usize,
        d_hidden: usize,
        d_z: usize,
        dropout: f64,
        seed: u64,
    ) -> Result<Self> {
        if d_in == 0 || d_hidden == 0 || d_z == 0 || n_hops == 0 {
            return Err(Error::InvalidParam("encoder dimensions must be positive".into()));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::InvalidParam(format!("dropout {dropout} outside [0, 1)")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hop_proj = (0..n_hops).map(|_| uniform_init(d_in, d_hidden, &mut rng)).collect();
        Ok(EncoderParams {
            variant: EncoderVariant::HopAttention,
            hop_proj,
            query_proj: Some(uniform_init(d_in, d_hidden, &mut rng)),
            w1: uniform_init(d_hidden, d_hidden, &mut rng),
            b1: Matrix::zeros(1, d_hidden),
            w2: uniform_init(d_hidden, d_hidden, &mut rng),
            b2: Matrix::zeros(1, d_hidden),
            w3: uniform_init(d_hidden, d_z, &mut rng),
            b3: Matrix::zeros(1, d_z),
            dropout,
        })
    }

    /// Learnable matrices in the canonical order used by the optimizer,
    /// gradient vectors, and the checkpoint format.
    pub fn matrices(&self) -> Vec<&Matrix> {
        let mut v: Vec<&Matrix> = self.hop_proj.iter().collect();
        if let Some(q) = &self.query_proj {
            v.push(q);
        }
        v.extend([&self.w1, &self.b1, &self.w2, &self.b2, &self.w3, &self.b3]);
        v
    }

    pub fn matrices_mut(&mut self) -> Vec<&mut Matrix> {
        let mut v: Vec<&mut Matrix> = self.hop_proj.iter_mut().collect();
        if let Some(q) = self.query_proj.as_mut() {
            v.push(q);
        }
        v.push(&mut self.w1);
        v.push(&mut self.b1);
        v.push(&mut self.w2);
        v.push(&mut self.b2);
        v.push(&mut self.w3);
        v.push(&mut self.b3);
        v
    }

    pub fn d_in(&self) -> usize {
        match self.variant {
            EncoderVariant::Mlp => self.w1.rows(),
            EncoderVariant::HopAttention => self.hop_proj[0].rows(),
        }
    }

    pub fn d_out(&self) -> usize {
        self.w3.cols()
    }

    pub fn validate(&self) -> Result<()> {
        for m in self.matrices() {
            if !m.is_finite() {
                return Err(Error::InvalidParam("non-finite encoder weight".into()));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidParam(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        match self.variant {
            EncoderVariant::Mlp => {
                if !self.hop_proj.is_empty() || self.query_proj.is_some() {
                    return Err(Error::InvalidParam(
                        "Mlp variant carries no hop or query projections".into(),
                    ));
                }
            }
            EncoderVariant::HopAttention => {
                if self.hop_proj.is_empty() || self.query_proj.is_none() {
                    return Err(Error::InvalidParam(
                        "HopAttention variant needs hop and query projections".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Encoder forward pass on the tape. Returns the parameter leaf ids in
/// [`EncoderParams::matrices`] order plus the n x d_z output node.
///
/// The residual head is h1 = relu(x W1 + b1), h2 = relu(h1 W2 + b2),
/// z = (h2 + h1) W3 + b3, with dropout after each relu in train mode only.
/// There is no identity path from the raw input to z.
pub fn encode_on_tape(
    tape: &mut Tape,
    params: &EncoderParams,
    hops: &[Matrix],
    mode: Mode,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<NodeId>, NodeId)> {
    params.validate()?;
    if hops.is_empty() {
        return Err(Error::InvalidParam("encoder needs at least one hop matrix".into()));
    }
    let d_in = params.d_in();
    for (k, h) in hops.iter().enumerate() {
        if h.cols() != d_in {
            return Err(Error::ShapeMismatch(format!(
                "hop {k} has {} columns, encoder expects {d_in}",
                h.cols()
            )));
        }
        if h.rows() != hops[0].rows() {
            return Err(Error::ShapeMismatch("hop matrices disagree on row count".into()));
        }
    }

    let mut param_ids = Vec::new();
    let mixed = match params.variant {
        EncoderVariant::Mlp => {
            let x0 = tape.constant(hops[0].clone());
            x0
        }
        EncoderVariant::HopAttention => {
            if hops.len() != params.hop_proj.len() {
                return Err(Error::ShapeMismatch(format!(
                    "{} hops supplied, {} hop projections",
                    hops.len(),
                    params.hop_proj.len()
                )));
            }
            let mut proj_ids = Vec::new();
            let mut projected = Vec::new();
            for (k, p) in params.hop_proj.iter().enumerate() {
                let pid = tape.leaf(p.clone());
                proj_ids.push(pid);
                let xk = tape.constant(hops[k].clone());
                projected.push(tape.matmul(xk, pid));
            }
            let qid = tape.leaf(params.query_proj.as_ref().unwrap().clone());
            let x0 = tape.constant(hops[0].clone());
            let query = tape.matmul(x0, qid);
            param_ids.extend(proj_ids);
            param_ids.push(qid);
            tape.hop_attention(query, projected)
        }
    };

    let w1 = tape.leaf(params.w1.clone());
    let b1 = tape.leaf(params.b1.clone());
    let w2 = tape.leaf(params.w2.clone());
    let b2 = tape.leaf(params.b2.clone());
    let w3 = tape.leaf(params.w3.clone());
    let b3 = tape.leaf(params.b3.clone());
    param_ids.extend([w1, b1, w2, b2, w3, b3]);

    let dropout = |tape: &mut Tape, id: NodeId, rng: &mut ChaCha8Rng| -> NodeId {
        if mode == Mode::Eval || params.dropout == 0.0 {
            return id;
        }
        let p = params.dropout;
        let keep = 1.0 / (1.0 - p);
        let v = tape.value(id);
        let mask = Matrix::from_fn(v.rows(), v.cols(), |_, _| {
            if rng.random::<f64>() < p {
                0.0
            } else {
                keep
            }
        });
        let mid = tape.constant(mask);
        tape.hadamard(id, mid)
    };

    let a1 = tape.matmul(mixed, w1);
    let a1b = tape.add(a1, b1);
    let h1 = tape.relu(a1b);
    let d1 = dropout(tape, h1, rng);
    let a2 = tape.matmul(d1, w2);
    let a2b = tape.add(a2, b2);
    let h2 = tape.relu(a2b);
    let d2 = dropout(tape, h2, rng);
    let res = tape.add(d2, d1);
    let a3 = tape.matmul(res, w3);
    let z = tape.add(a3, b3);
    Ok((param_ids, z))
}

/// Label-smoothed targets: Y (1 - alpha) + alpha / C, rows still sum to 1.
pub fn smooth_targets(y: &Matrix, alpha: f64) -> Matrix {
    let c = y.cols() as f64;
    Matrix::from_fn(y.rows(), y.cols(), |i, j| y[(i, j)] * (1.0 - alpha) + alpha / c)
}

/// Cosine annealing: lr(0) = base, lr(total) = 0.
pub fn cosine_lr(base: f64, step: usize, total: usize) -> f64 {
    if total == 0 {
        return base;
    }
    let s = step.min(total) as f64 / total as f64;
    base * 0.5 * (1.0 + (PI * s).cos())
}

/// Scales all gradients so the global Frobenius norm is at most `max_norm`.
/// Returns the post-clip norm.
pub fn clip_global(grads: &mut [Matrix], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g.frobenius_norm().powi(2)).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            *g = g.scale(s);
        }
        max_norm
    } else {
        norm
    }
}

/// splitmix64-style mixer for deriving independent seeds. Replayable:
/// episode seeds depend only on (config seed, step, lane).
pub fn mix_seed(seed: u64, step: u64, lane: u64) -> u64 {
    let mut x = seed
        ^ step.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ lane.wrapping_mul(0xD1B5_4A32_D192_ED03);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    /// 1: one uniformly chosen source per step. 3: one episode per task
    /// kind per step, gradients averaged 1:1:1.
    pub episodes_per_step: usize,
    pub lambda: f64,
    pub label_smoothing: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub clip_norm: f64,
    pub seed: u64,
    /// Fixed K; when absent K is drawn uniformly from [8, 32] per episode.
    pub k_override: Option<usize>,
    /// Fixed Q; when absent Q is drawn uniformly from [16, 64] per episode.
    pub q_override: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 2000,
            episodes_per_step: 1,
            lambda: 10.0,
            label_smoothing: 0.1,
            lr: 3e-4,
            weight_decay: 1e-4,
            clip_norm: 1.0,
            seed: 0,
            k_override: None,
            q_override: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !matches!(self.episodes_per_step, 1 | 3) {
            return Err(Error::InvalidParam(format!(
                "episodes_per_step must be 1 or 3, got {}",
                self.episodes_per_step
            )));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::InvalidParam(format!("lambda must be positive: {}", self.lambda)));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(Error::InvalidParam(format!(
                "label smoothing {} outside [0, 1)",
                self.label_smoothing
            )));
        }
        if !(self.lr >= 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidParam("lr and weight decay must be non-negative".into()));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::InvalidParam(format!(
                "clip norm must be positive: {}",
                self.clip_norm
            )));
        }
        if self.k_override == Some(0) || self.q_override == Some(0) {
            return Err(Error::InvalidParam("K and Q overrides must be at least 1".into()));
        }
        Ok(())
    }
}

/// Geometry of the synthetic three-class task with one bimodal class. Class
/// 0 splits into two modes at +-(delta/2) e1 with opposite h0 markers on e3
/// and common height h = sqrt(max(0, r^2 - (delta/2)^2)) on e2; classes 1
/// and 2 sit at -+ s e1.
#[derive(Debug, Clone, PartialEq)]
pub struct BimodalSpec {
    pub n_per_class: usize,
    pub d_in: usize,
    pub delta: f64,
    pub sigma: f64,
    pub r: f64,
    pub h0: f64,
    pub s: f64,
}

impl BimodalSpec {
    pub fn demo() -> Self {
        BimodalSpec {
            n_per_class: 60,
            d_in: 8,
            delta: 6.0,
            sigma: 0.4,
            r: 2.5,
            h0: 1.5,
            s: 1.0,
        }
    }

    /// Class centers per sample plus Gaussian noise; labels 0 (bimodal),
    /// 1, 2. The per-class count must be even so the modes balance.
    pub fn cloud(&self, seed: u64) -> Result<(Vec<usize>, Matrix)> {
        if self.d_in < 3 {
            return Err(Error::InvalidParam("bimodal cloud needs d_in >= 3".into()));
        }
        if self.n_per_class < 2 || self.n_per_class % 2 != 0 {
            return Err(Error::InvalidParam("n_per_class must be even and >= 2".into()));
        }
        let half = self.delta / 2.0;
        let h = (self.r * self.r - half * half).max(0.0).sqrt();
        let n = 3 * self.n_per_class;
        let mut centers = Matrix::zeros(n, self.d_in);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let class = i / self.n_per_class;
            labels.push(class);
            match class {
                0 => {
                    let sign = if (i % self.n_per_class) < self.n_per_class / 2 {
                        1.0
                    } else {
                        -1.0
                    };
                    centers[(i, 0)] = sign * half;
                    centers[(i, 1)] = h;
                    centers[(i, 2)] = sign * self.h0;
                }
                1 => centers[(i, 0)] = -self.s,
                _ => centers[(i, 0)] = self.s,
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Matrix::gaussian(n, self.d_in, &mut rng).scale(self.sigma);
        Ok((labels, centers.add(&noise)))
    }
}

/// A pool the trainer samples episodes from. Graph inputs carry their hop
/// stacks (hops[0] = features); the bimodal source generates a fresh cloud
/// per episode.
#[derive(Debug, Clone)]
pub enum TaskSource {
    Node { graph: GraphData, hops: Vec<Matrix> },
    Edge { graph: GraphData, hops: Vec<Matrix> },
    GraphSet { graphs: Vec<GraphData>, hops: Vec<Vec<Matrix>> },
    BimodalNodes(BimodalSpec),
}

impl TaskSource {
    pub fn kind(&self) -> TaskKind {
        match self {
            TaskSource::Node { .. } | TaskSource::BimodalNodes(_) => TaskKind::Node,
            TaskSource::Edge { .. } => TaskKind::Edge,
            TaskSource::GraphSet { .. } => TaskKind::Graph,
        }
    }
}

/// A sampled episode together with the hop stacks its references index.
#[derive(Debug, Clone)]
pub struct EpisodeData {
    pub episode: Episode,
    /// One hop stack per graph; node and edge episodes use `inputs[0]`.
    pub inputs: Vec<Vec<Matrix>>,
}

pub fn sample_episode(source: &TaskSource, k: usize, q: usize, seed: u64) -> Result<EpisodeData> {
    match source {
        TaskSource::Node { graph, hops } => Ok(EpisodeData {
            episode: sample_node_episode(graph, k, q, seed)?,
            inputs: vec![hops.clone()],
        }),
        TaskSource::Edge { graph, hops } => Ok(EpisodeData {
            episode: sample_edge_episode(graph, k, q, seed)?,
            inputs: vec![hops.clone()],
        }),
        TaskSource::GraphSet { graphs, hops } => Ok(EpisodeData {
            episode: sample_graph_episode(graphs, k, q, seed)?,
            inputs: hops.clone(),
        }),
        TaskSource::BimodalNodes(spec) => {
            let (labels, features) = spec.cloud(mix_seed(seed, 1, 11))?;
            let mut g = GraphData::try_new(labels.len(), vec![])?;
            g.node_labels = Some(labels);
            Ok(EpisodeData {
                episode: sample_node_episode(&g, k, q, seed)?,
                inputs: vec![vec![features]],
            })
        }
    }
}

fn one_hot_from_refs(refs: &[ExampleRef], c: usize) -> Matrix {
    let mut y = Matrix::zeros(refs.len(), c);
    for (i, r) in refs.iter().enumerate() {
        y[(i, r.class())] = 1.0;
    }
    y
}

fn vstack(parts: &[&Matrix]) -> Matrix {
    let cols = parts[0].cols();
    let rows = parts.iter().map(|p| p.rows()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut at = 0;
    for p in parts {
        for i in 0..p.rows() {
            out.row_mut(at).copy_from_slice(p.row(i));
            at += 1;
        }
    }
    out
}

struct BuiltEpisode {
    param_ids: Vec<NodeId>,
    loss_id: NodeId,
    logits: Matrix,
    z_s: Matrix,
    z_q: Matrix,
    y_s: Matrix,
    y_q: Matrix,
}

/// Builds the full per-episode computation: encode, select or pool the
/// support and query rows, fit the ridge head in closed form on the tape,
/// and score the smoothed cross-entropy on the queries.
fn build_episode(
    tape: &mut Tape,
    params: &EncoderParams,
    data: &EpisodeData,
    lambda: f64,
    label_smoothing: f64,
    mode: Mode,
    rng: &mut ChaCha8Rng,
) -> Result<BuiltEpisode> {
    let ep = &data.episode;
    if data.inputs.is_empty() {
        return Err(Error::MissingEmbedding("episode carries no inputs".into()));
    }
    let needed_hops = match params.variant {
        EncoderVariant::Mlp => 1,
        EncoderVariant::HopAttention => params.hop_proj.len(),
    };

    // Graph episodes encode all graphs as one stacked matrix (the encoder
    // is row-local), then mean-pool each referenced graph's row range.
    let (param_ids, z, graph_offsets) = match ep.task {
        TaskKind::Node | TaskKind::Edge => {
            let hops = &data.inputs[0];
            if hops.len() < needed_hops {
                return Err(Error::ShapeMismatch(format!(
                    "{} hops supplied, encoder needs {needed_hops}",
                    hops.len()
                )));
            }
            let (pids, z) = encode_on_tape(tape, params, &hops[..needed_hops], mode, rng)?;
            (pids, z, Vec::new())
        }
        TaskKind::Graph => {
            let mut offsets = vec![0usize];
            for (g, stack) in data.inputs.iter().enumerate() {
                if stack.len() < needed_hops {
                    return Err(Error::ShapeMismatch(format!(
                        "graph {g} has {} hops, encoder needs {needed_hops}",
                        stack.len()
                    )));
                }
                offsets.push(offsets.last().unwrap() + stack[0].rows());
            }
            let stacked: Vec<Matrix> = (0..needed_hops)
                .map(|h| {
                    let parts: Vec<&Matrix> = data.inputs.iter().map(|s| &s[h]).collect();
                    vstack(&parts)
                })
                .collect();
            let (pids, z) = encode_on_tape(tape, params, &stacked, mode, rng)?;
            (pids, z, offsets)
        }
    };
    let n = tape.value(z).rows();

    let select = |tape: &mut Tape, refs: &[ExampleRef]| -> Result<NodeId> {
        match ep.task {
            TaskKind::Node => {
                let mut s = Matrix::zeros(refs.len(), n);
                for (i, r) in refs.iter().enumerate() {
                    let ExampleRef::Node { node, .. } = *r else {
                        return Err(Error::InvalidParam("mixed reference kinds".into()));
                    };
                    if node >= n {
                        return Err(Error::MissingEmbedding(format!("node {node}")));
                    }
                    s[(i, node)] = 1.0;
                }
                let sid = tape.constant(s);
                Ok(tape.matmul(sid, z))
            }
            TaskKind::Edge => {
                let mut su = Matrix::zeros(refs.len(), n);
                let mut sv = Matrix::zeros(refs.len(), n);
                for (i, r) in refs.iter().enumerate() {
                    let ExampleRef::Pair { u, v, .. } = *r else {
                        return Err(Error::InvalidParam("mixed reference kinds".into()));
                    };
                    if u >= n || v >= n {
                        return Err(Error::MissingEmbedding(format!("pair ({u}, {v})")));
                    }
                    su[(i, u)] = 1.0;
                    sv[(i, v)] = 1.0;
                }
                let suid = tape.constant(su);
                let svid = tape.constant(sv);
                let zu = tape.matmul(suid, z);
                let zv = tape.matmul(svid, z);
                Ok(tape.hadamard(zu, zv))
            }
            TaskKind::Graph => {
                let mut groups = Vec::with_capacity(refs.len());
                for r in refs {
                    let ExampleRef::Graph { graph, .. } = *r else {
                        return Err(Error::InvalidParam("mixed reference kinds".into()));
                    };
                    if graph + 1 >= graph_offsets.len() {
                        return Err(Error::MissingEmbedding(format!("graph {graph}")));
                    }
                    groups.push((graph_offsets[graph]..graph_offsets[graph + 1]).collect());
                }
                Ok(tape.row_mean_pool(z, groups))
            }
        }
    };

    let zs = select(tape, &ep.support_refs)?;
    let zq = select(tape, &ep.query_refs)?;
    let y_s = one_hot_from_refs(&ep.support_refs, ep.c);
    let y_q = one_hot_from_refs(&ep.query_refs, ep.c);

    let zs_tilde = tape.append_bias_col(zs);
    let zq_tilde = tape.append_bias_col(zq);
    let gram = tape.matmul_nt(zs_tilde, zs_tilde);
    let ridge = tape.constant(Matrix::identity(ep.support_refs.len()).scale(lambda));
    let kmat = tape.add(gram, ridge);
    let ys_id = tape.constant(y_s.clone());
    let dual = tape.solve_spd(kmat, ys_id)?;
    let wb = tape.matmul_tn(zs_tilde, dual);
    let logits_id = tape.matmul(zq_tilde, wb);
    let loss_id = tape.softmax_xent(logits_id, smooth_targets(&y_q, label_smoothing));

    Ok(BuiltEpisode {
        param_ids,
        loss_id,
        logits: tape.value(logits_id).clone(),
        z_s: tape.value(zs).clone(),
        z_q: tape.value(zq).clone(),
        y_s,
        y_q,
    })
}

/// Deterministic (dropout-free) episode loss.
pub fn episode_loss_value(
    params: &EncoderParams,
    data: &EpisodeData,
    lambda: f64,
    label_smoothing: f64,
) -> Result<f64> {
    let mut tape = Tape::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let built = build_episode(&mut tape, params, data, lambda, label_smoothing, Mode::Eval, &mut rng)?;
    Ok(tape.value(built.loss_id)[(0, 0)])
}

/// Deterministic episode loss plus its gradient for every encoder matrix
/// (in [`EncoderParams::matrices`] order) and the query logits.
pub fn episode_loss_grads(
    params: &EncoderParams,
    data: &EpisodeData,
    lambda: f64,
    label_smoothing: f64,
) -> Result<(f64, Vec<Matrix>, Matrix)> {
    let mut tape = Tape::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let built = build_episode(&mut tape, params, data, lambda, label_smoothing, Mode::Eval, &mut rng)?;
    let loss = tape.value(built.loss_id)[(0, 0)];
    tape.backward(built.loss_id)?;
    let grads = built.param_ids.iter().map(|&id| tape.grad(id)).collect();
    Ok((loss, grads, built.logits))
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Adaptive moments with decoupled weight decay; the decay term is scaled
/// by the (annealed) learning rate, so lr = 0 freezes parameters entirely.
struct AdamW {
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    t: i32,
}

impl AdamW {
    fn new(params: &EncoderParams) -> Self {
        let zeros: Vec<Matrix> =
            params.matrices().iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();
        AdamW { m: zeros.clone(), v: zeros, t: 0 }
    }

    fn step(&mut self, params: &mut EncoderParams, grads: &[Matrix], lr: f64, wd: f64) {
        self.t += 1;
        let bc1 = 1.0 - BETA1.powi(self.t);
        let bc2 = 1.0 - BETA2.powi(self.t);
        for (idx, p) in params.matrices_mut().into_iter().enumerate() {
            let g = &grads[idx];
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            for i in 0..p.rows() {
                for j in 0..p.cols() {
                    let gij = g[(i, j)];
                    m[(i, j)] = BETA1 * m[(i, j)] + (1.0 - BETA1) * gij;
                    v[(i, j)] = BETA2 * v[(i, j)] + (1.0 - BETA2) * gij * gij;
                    let mhat = m[(i, j)] / bc1;
                    let vhat = v[(i, j)] / bc2;
                    p[(i, j)] -= lr * wd * p[(i, j)];
                    p[(i, j)] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub task: TaskKind,
    pub loss: f64,
    pub query_acc: f64,
    pub lr: f64,
}

pub fn task_name(kind: TaskKind) -> &'static str {
    match kind {
        TaskKind::Node => "node",
        TaskKind::Edge => "edge",
        TaskKind::Graph => "graph",
    }
}

pub fn write_log_csv(rows: &[LogRow]) -> String {
    let mut out = String::from("step,task,loss,query_acc,lr\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.step,
            task_name(r.task),
            r.loss,
            r.query_acc,
            r.lr
        ));
    }
    out
}

/// Episode seed and sizes for (config, step, lane); shared by the training
/// loop and post-hoc replays so both see identical episodes.
fn episode_plan(config: &TrainConfig, step: usize, lane: usize) -> (u64, usize, usize) {
    let eseed = mix_seed(config.seed, step as u64 + 1, lane as u64);
    let mut kq_rng = ChaCha8Rng::seed_from_u64(mix_seed(eseed, 2, 3));
    let k = config.k_override.unwrap_or_else(|| kq_rng.random_range(8..=32));
    let q = config.q_override.unwrap_or_else(|| kq_rng.random_range(16..=64));
    (eseed, k, q)
}

fn episode_accuracy(logits: &Matrix, y_q: &Matrix) -> f64 {
    let preds = argmax_rows(logits);
    let labels = argmax_rows(y_q);
    accuracy(&preds, &labels)
}

/// Runs the episodic loop: sample, fit the ridge head in-graph, score the
/// queries, backpropagate, clip, update. Returns the final parameters and
/// one log row per episode.
pub fn train(
    params: EncoderParams,
    config: &TrainConfig,
    sources: &[TaskSource],
) -> Result<(EncoderParams, Vec<LogRow>)> {
    config.validate()?;
    params.validate()?;
    if sources.is_empty() {
        return Err(Error::InvalidParam("training needs at least one task source".into()));
    }
    if config.episodes_per_step == 3 {
        for kind in [TaskKind::Node, TaskKind::Edge, TaskKind::Graph] {
            if !sources.iter().any(|s| s.kind() == kind) {
                return Err(Error::InvalidParam(format!(
                    "episodes_per_step = 3 needs a {} source",
                    task_name(kind)
                )));
            }
        }
    }

    let mut params = params;
    let mut opt = AdamW::new(&params);
    let mut pick_rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, 0, 1));
    let mut log = Vec::new();

    for step in 0..config.steps {
        let lr = cosine_lr(config.lr, step, config.steps);
        let chosen: Vec<&TaskSource> = if config.episodes_per_step == 1 {
            vec![&sources[pick_rng.random_range(0..sources.len())]]
        } else {
            [TaskKind::Node, TaskKind::Edge, TaskKind::Graph]
                .iter()
                .map(|&kind| {
                    let of_kind: Vec<&TaskSource> =
                        sources.iter().filter(|s| s.kind() == kind).collect();
                    of_kind[pick_rng.random_range(0..of_kind.len())]
                })
                .collect()
        };

        let weight = 1.0 / chosen.len() as f64;
        let mut grad_acc: Vec<Matrix> =
            params.matrices().iter().map(|p| Matrix::zeros(p.rows(), p.cols())).collect();

        for (lane, source) in chosen.iter().enumerate() {
            let (eseed, k, q) = episode_plan(config, step, lane);
            let data = sample_episode(source, k, q, eseed)?;
            let mut tape = Tape::new();
            let mut drop_rng = ChaCha8Rng::seed_from_u64(mix_seed(eseed, 4, 5));
            let built = build_episode(
                &mut tape,
                &params,
                &data,
                config.lambda,
                config.label_smoothing,
                Mode::Train,
                &mut drop_rng,
            )?;
            let loss = tape.value(built.loss_id)[(0, 0)];
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { step });
            }
            tape.backward(built.loss_id)?;
            for (acc, &pid) in grad_acc.iter_mut().zip(&built.param_ids) {
                *acc = acc.add(&tape.grad(pid).scale(weight));
            }
            log.push(LogRow {
                step,
                task: source.kind(),
                loss,
                query_acc: episode_accuracy(&built.logits, &built.y_q),
                lr,
            });
        }

        clip_global(&mut grad_acc, config.clip_norm);
        opt.step(&mut params, &grad_acc, lr, config.weight_decay);
    }
    Ok((params, log))
}

/// Prototype-readout accuracy of a fixed encoder on the episodes the
/// training loop would see in its final `episodes` steps. Single-source
/// configs only, so the replayed stream matches the training log exactly.
pub fn frozen_prototype_accuracy(
    params: &EncoderParams,
    config: &TrainConfig,
    sources: &[TaskSource],
    episodes: usize,
) -> Result<f64> {
    if sources.len() != 1 {
        return Err(Error::InvalidParam(
            "frozen replay requires exactly one task source".into(),
        ));
    }
    let first = config.steps.saturating_sub(episodes);
    let mut total = 0.0;
    let mut count = 0;
    for step in first..config.steps {
        let (eseed, k, q) = episode_plan(config, step, 0);
        let data = sample_episode(&sources[0], k, q, eseed)?;
        let mut tape = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let built = build_episode(
            &mut tape,
            params,
            &data,
            config.lambda,
            config.label_smoothing,
            Mode::Eval,
            &mut rng,
        )?;
        let proto = fit_prototypes(&built.z_s, &built.y_s)?;
        let logits = prototype_logits(&proto, &built.z_q)?;
        total += episode_accuracy(&logits, &built.y_q);
        count += 1;
    }
    if count == 0 {
        return Err(Error::InvalidParam("no episodes to replay".into()));
    }
    Ok(total / count as f64)
}

/// The demonstration preset: a 3-class node task whose class 0 is bimodal
/// in the fully dominated regime, trained with the Mlp encoder.
pub fn bimodal_demo_setup(seed: u64) -> (EncoderParams, TrainConfig, Vec<TaskSource>) {
    let params = EncoderParams::new_mlp(8, 32, 16, 0.1, mix_seed(seed, 9, 9))
        .expect("demo dimensions are valid");
    let config = TrainConfig {
        steps: 500,
        episodes_per_step: 1,
        k_override: Some(10),
        q_override: Some(10),
        seed,
        ..TrainConfig::default()
    };
    let sources = vec![TaskSource::BimodalNodes(BimodalSpec::demo())];
    (params, config, sources)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphkit::{align_features, generate_sbm, hop_stack, sym_normalize};
    use approx::assert_abs_diff_eq;

    fn demo_episode(seed: u64, k: usize, q: usize) -> EpisodeData {
        let source = TaskSource::BimodalNodes(BimodalSpec::demo());
        sample_episode(&source, k, q, seed).unwrap()
    }

    fn relu_mat(m: &Matrix) -> Matrix {
        Matrix::from_fn(m.rows(), m.cols(), |i, j| m[(i, j)].max(0.0))
    }

    #[test]
    fn zero_weights_output_the_final_bias_row() {
        let mut params = EncoderParams::new_mlp(4, 5, 3, 0.0, 1).unwrap();
        params.w1 = Matrix::zeros(4, 5);
        params.w2 = Matrix::zeros(5, 5);
        params.w3 = Matrix::zeros(5, 3);
        params.b1 = Matrix::from_fn(1, 5, |_, j| j as f64);
        params.b2 = Matrix::from_fn(1, 5, |_, j| -(j as f64));
        params.b3 = Matrix::from_fn(1, 3, |_, j| 10.0 + j as f64);
        let x = Matrix::from_fn(6, 4, |i, j| (i + j) as f64);
        let mut tape = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (_, z) = encode_on_tape(&mut tape, &params, &[x], Mode::Eval, &mut rng).unwrap();
        let zv = tape.value(z);
        for i in 0..6 {
            for j in 0..3 {
                assert_eq!(zv[(i, j)], 10.0 + j as f64);
            }
        }
    }

    #[test]
    fn single_hop_attention_is_the_projected_residual_mlp() {
        let params = EncoderParams::new_hop_attention(4, 1, 6, 3, 0.0, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Matrix::gaussian(5, 4, &mut rng);
        let mut tape = Tape::new();
        let mut drng = ChaCha8Rng::seed_from_u64(0);
        let (_, z) =
            encode_on_tape(&mut tape, &params, &[x.clone()], Mode::Eval, &mut drng).unwrap();

        // With one hop the softmax weight is 1, so the attention output is
        // exactly the projected hop.
        let mixed = x.matmul(&params.hop_proj[0]);
        let h1 = relu_mat(&mixed.matmul(&params.w1).add_row_broadcast(&params.b1));
        let h2 = relu_mat(&h1.matmul(&params.w2).add_row_broadcast(&params.b2));
        let expect = h2.add(&h1).matmul(&params.w3).add_row_broadcast(&params.b3);
        assert!(tape.value(z).sub(&expect).max_abs() <= 1e-12);
    }

    #[test]
    fn forward_matches_a_step_by_step_oracle() {
        let params = EncoderParams::new_hop_attention(4, 3, 5, 2, 0.0, 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let hops: Vec<Matrix> = (0..3).map(|_| Matrix::gaussian(5, 4, &mut rng)).collect();
        let mut tape = Tape::new();
        let mut drng = ChaCha8Rng::seed_from_u64(0);
        let (_, z) = encode_on_tape(&mut tape, &params, &hops, Mode::Eval, &mut drng).unwrap();

        let projected: Vec<Matrix> = (0..3).map(|k| hops[k].matmul(&params.hop_proj[k])).collect();
        let query = hops[0].matmul(params.query_proj.as_ref().unwrap());
        let scale = 1.0 / (5.0f64).sqrt();
        let mut mixed = Matrix::zeros(5, 5);
        for i in 0..5 {
            let scores: Vec<f64> = (0..3)
                .map(|k| {
                    query.row(i).iter().zip(projected[k].row(i)).map(|(a, b)| a * b).sum::<f64>()
                        * scale
                })
                .collect();
            let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores.iter().map(|s| (s - mx).exp()).collect();
            let denom: f64 = exps.iter().sum();
            for j in 0..5 {
                mixed[(i, j)] =
                    (0..3).map(|k| exps[k] / denom * projected[k][(i, j)]).sum::<f64>();
            }
        }
        let h1 = relu_mat(&mixed.matmul(&params.w1).add_row_broadcast(&params.b1));
        let h2 = relu_mat(&h1.matmul(&params.w2).add_row_broadcast(&params.b2));
        let expect = h2.add(&h1).matmul(&params.w3).add_row_broadcast(&params.b3);
        assert!(tape.value(z).sub(&expect).max_abs() <= 1e-10);
    }

    #[test]
    fn chance_level_loss_for_shuffled_labels() {
        let mut data = demo_episode(5, 10, 10);
        // Break the label-feature link: rotate every reference's class.
        let rotate = |refs: &mut Vec<ExampleRef>| {
            for r in refs.iter_mut() {
                if let ExampleRef::Node { node, class } = *r {
                    *r = ExampleRef::Node { node, class: (class + 1 + node % 2) % 3 };
                }
            }
        };
        rotate(&mut data.episode.support_refs);
        rotate(&mut data.episode.query_refs);
        let params = EncoderParams::new_mlp(8, 32, 16, 0.1, 4).unwrap();
        let loss = episode_loss_value(&params, &data, 10.0, 0.1).unwrap();
        // ln 3 = 1.0986; random labels leave the damped ridge head near the
        // uniform predictor.
        assert!((loss - 3.0f64.ln()).abs() <= 0.2, "loss {loss}");
    }

    #[test]
    fn leaked_support_queries_score_lower_loss() {
        let params = EncoderParams::new_mlp(8, 32, 16, 0.1, 4).unwrap();
        let disjoint = demo_episode(6, 10, 10);
        let mut leaked = disjoint.clone();
        leaked.episode.query_refs = leaked.episode.support_refs.clone();
        let l_disjoint = episode_loss_value(&params, &disjoint, 10.0, 0.1).unwrap();
        let l_leaked = episode_loss_value(&params, &leaked, 10.0, 0.1).unwrap();
        assert!(l_leaked < l_disjoint, "leaked {l_leaked} vs disjoint {l_disjoint}");
    }

    #[test]
    fn meta_gradients_match_central_differences() {
        for seed in 0..3u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 3 * 8;
            let features = Matrix::gaussian(n, 5, &mut rng);
            let mut g = GraphData::try_new(n, vec![]).unwrap();
            g.node_labels = Some((0..n).map(|i| i / 8).collect());
            let source = TaskSource::Node { graph: g, hops: vec![features] };
            let data = sample_episode(&source, 4, 4, seed + 40).unwrap();
            let params = EncoderParams::new_mlp(5, 6, 8, 0.0, seed + 50).unwrap();

            let (_, grads, _) = episode_loss_grads(&params, &data, 10.0, 0.1).unwrap();
            let mut worst = 0.0f64;
            for (mi, base) in params.matrices().iter().enumerate() {
                for i in 0..base.rows() {
                    for j in 0..base.cols() {
                        let h = 1e-5 * base[(i, j)].abs().max(1.0);
                        let mut plus = params.clone();
                        plus.matrices_mut()[mi][(i, j)] += h;
                        let mut minus = params.clone();
                        minus.matrices_mut()[mi][(i, j)] -= h;
                        let fp = episode_loss_value(&plus, &data, 10.0, 0.1).unwrap();
                        let fm = episode_loss_value(&minus, &data, 10.0, 0.1).unwrap();
                        let cd = (fp - fm) / (2.0 * h);
                        let rel = (grads[mi][(i, j)] - cd).abs() / cd.abs().max(1.0);
                        worst = worst.max(rel);
                    }
                }
            }
            assert!(worst <= 1e-4, "seed {seed}: max rel err {worst}");
        }
    }

    #[test]
    fn edge_and_graph_episode_losses_are_finite() {
        let g = generate_sbm(40, &[20, 20], 0.45, 0.08, 3).unwrap();
        let a = sym_normalize(&g);
        let x0 = align_features(&g, 8, 2, 3).unwrap();
        let hops = hop_stack(&x0, &a, 2).unwrap().hops;
        let params = EncoderParams::new_hop_attention(8, 3, 10, 6, 0.1, 5).unwrap();

        let edge = TaskSource::Edge { graph: g, hops };
        let data = sample_episode(&edge, 4, 4, 9).unwrap();
        let loss = episode_loss_value(&params, &data, 10.0, 0.1).unwrap();
        assert!(loss.is_finite() && loss > 0.0);

        let mut graphs = Vec::new();
        let mut stacks = Vec::new();
        for i in 0..12 {
            let mut gg = generate_sbm(12, &[6, 6], 0.6, 0.1, 100 + i).unwrap();
            gg.graph_label = Some((i % 2) as usize);
            let an = sym_normalize(&gg);
            let x = align_features(&gg, 8, 2, 200 + i).unwrap();
            stacks.push(hop_stack(&x, &an, 2).unwrap().hops);
            graphs.push(gg);
        }
        let set = TaskSource::GraphSet { graphs, hops: stacks };
        let data = sample_episode(&set, 3, 3, 10).unwrap();
        let loss = episode_loss_value(&params, &data, 10.0, 0.1).unwrap();
        assert!(loss.is_finite() && loss > 0.0);
    }

    #[test]
    fn zero_steps_return_the_initialization() {
        let (params, mut config, sources) = bimodal_demo_setup(3);
        config.steps = 0;
        let (out, log) = train(params.clone(), &config, &sources).unwrap();
        assert_eq!(out, params);
        assert!(log.is_empty());
    }

    #[test]
    fn zero_lr_freezes_parameters_including_weight_decay() {
        let (params, mut config, sources) = bimodal_demo_setup(4);
        config.steps = 3;
        config.lr = 0.0;
        let (out, log) = train(params.clone(), &config, &sources).unwrap();
        assert_eq!(out, params);
        assert_eq!(log.len(), 3);
    }

    #[test]
    fn clipping_caps_the_global_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut grads = vec![
            Matrix::gaussian(4, 5, &mut rng).scale(3.0),
            Matrix::gaussian(2, 2, &mut rng).scale(5.0),
        ];
        let original = grads.clone();
        let pre: f64 = grads.iter().map(|g| g.frobenius_norm().powi(2)).sum::<f64>().sqrt();
        assert!(pre > 1.0);
        let post = clip_global(&mut grads, 1.0);
        assert!(post <= 1.0 + 1e-9);
        let measured: f64 = grads.iter().map(|g| g.frobenius_norm().powi(2)).sum::<f64>().sqrt();
        assert_abs_diff_eq!(measured, 1.0, epsilon = 1e-12);
        // Direction is preserved: clipped = original / pre.
        assert!(grads[0].sub(&original[0].scale(1.0 / pre)).max_abs() <= 1e-12);

        let mut small = vec![Matrix::from_vec(1, 2, vec![0.1, 0.2])];
        let post = clip_global(&mut small, 1.0);
        assert!(post < 1.0);
        assert_eq!(small[0], Matrix::from_vec(1, 2, vec![0.1, 0.2]));
    }

    #[test]
    fn cosine_schedule_hits_both_endpoints() {
        assert_abs_diff_eq!(cosine_lr(3e-4, 0, 1000), 3e-4, epsilon = 0.0);
        assert!(cosine_lr(3e-4, 1000, 1000) <= 1e-8 * 3e-4);
        // Halfway the schedule sits at half the base rate.
        assert_abs_diff_eq!(cosine_lr(1.0, 500, 1000), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn smoothed_targets_keep_row_sums_and_true_mass() {
        let y = Matrix::from_rows(&[
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.0],
        ]);
        let t = smooth_targets(&y, 0.1);
        for i in 0..2 {
            let sum: f64 = t.row(i).iter().sum();
            assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(t[(0, 0)], 1.0 - 0.1 + 0.1 / 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t[(0, 1)], 0.1 / 4.0, epsilon = 1e-12);
    }

    #[test]
    fn training_is_bit_deterministic_per_seed() {
        let (params, mut config, sources) = bimodal_demo_setup(12);
        config.steps = 5;
        let (p1, l1) = train(params.clone(), &config, &sources).unwrap();
        let (p2, l2) = train(params, &config, &sources).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(l1, l2);
    }

    #[test]
    fn mochi_plus_plus_needs_all_three_task_kinds() {
        let (params, mut config, sources) = bimodal_demo_setup(1);
        config.episodes_per_step = 3;
        config.steps = 1;
        assert!(matches!(
            train(params, &config, &sources),
            Err(Error::InvalidParam(_))
        ));
    }

    #[test]
    fn mochi_plus_plus_logs_one_row_per_task_kind() {
        let g = generate_sbm(60, &[20, 20, 20], 0.5, 0.05, 17).unwrap();
        let a = sym_normalize(&g);
        let x0 = align_features(&g, 6, 2, 18).unwrap();
        let hops = hop_stack(&x0, &a, 1).unwrap().hops;
        let mut graphs = Vec::new();
        let mut stacks = Vec::new();
        for i in 0..16 {
            let mut gg = generate_sbm(10, &[5, 5], 0.7, 0.1, 300 + i).unwrap();
            gg.graph_label = Some((i % 2) as usize);
            let an = sym_normalize(&gg);
            let x = align_features(&gg, 6, 2, 400 + i).unwrap();
            stacks.push(hop_stack(&x, &an, 1).unwrap().hops);
            graphs.push(gg);
        }
        let sources = vec![
            TaskSource::Node { graph: g.clone(), hops: hops.clone() },
            TaskSource::Edge { graph: g, hops },
            TaskSource::GraphSet { graphs, hops: stacks },
        ];
        let params = EncoderParams::new_hop_attention(6, 2, 8, 6, 0.1, 19).unwrap();
        let config = TrainConfig {
            steps: 2,
            episodes_per_step: 3,
            k_override: Some(3),
            q_override: Some(3),
            seed: 20,
            ..TrainConfig::default()
        };
        let (_, log) = train(params, &config, &sources).unwrap();
        assert_eq!(log.len(), 6);
        for step in 0..2 {
            let tasks: Vec<TaskKind> =
                log.iter().filter(|r| r.step == step).map(|r| r.task).collect();
            assert_eq!(tasks, vec![TaskKind::Node, TaskKind::Edge, TaskKind::Graph]);
        }
    }

    #[test]
    fn short_demo_run_reduces_the_loss() {
        let (params, mut config, sources) = bimodal_demo_setup(21);
        config.steps = 120;
        let (_, log) = train(params, &config, &sources).unwrap();
        let first: f64 = log[..20].iter().map(|r| r.loss).sum::<f64>() / 20.0;
        let last: f64 = log[100..].iter().map(|r| r.loss).sum::<f64>() / 20.0;
        assert!(last < first, "loss went {first} -> {last}");
    }

    #[test]
    fn checkpoint_roundtrip_preserves_every_parameter() {
        let params = EncoderParams::new_hop_attention(5, 3, 7, 4, 0.25, 31).unwrap();
        let path = std::env::temp_dir().join(format!("mchi-rt-{}.bin", std::process::id()));
        save_checkpoint(&path, &params).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        std::fs::remove_file(&path).ok();
        assert_eq!(params, loaded);

        let mlp = EncoderParams::new_mlp(4, 6, 3, 0.0, 32).unwrap();
        let path = std::env::temp_dir().join(format!("mchi-rt2-{}.bin", std::process::id()));
        save_checkpoint(&path, &mlp).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        std::fs::remove_file(&path).ok();
        assert_eq!(mlp, loaded);
    }

    #[test]
    fn corrupted_checkpoints_are_rejected() {
        let params = EncoderParams::new_mlp(3, 4, 2, 0.0, 33).unwrap();
        let path = std::env::temp_dir().join(format!("mchi-bad-{}.bin", std::process::id()));
        save_checkpoint(&path, &params).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Parse(_))));
        // Truncation is also a parse error, not a panic.
        let ok_bytes = {
            bytes[0] = b'M';
            std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
            load_checkpoint(&path)
        };
        std::fs::remove_file(&path).ok();
        assert!(matches!(ok_bytes, Err(Error::Parse(_))));
    }

    #[test]
    fn log_csv_has_the_documented_schema() {
        let rows = vec![LogRow {
            step: 3,
            task: TaskKind::Edge,
            loss: 1.25,
            query_acc: 0.5,
            lr: 3e-4,
        }];
        let csv = write_log_csv(&rows);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("step,task,loss,query_acc,lr"));
        assert_eq!(lines.next(), Some("3,edge,1.25,0.5,0.0003"));
    }
}
