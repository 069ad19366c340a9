//! Episode sampling for node, edge, and graph tasks, and assembly into the
//! (Z_s, Y_s, Z_q, Y_q) matrices every readout consumes.
//!
//! Samplers are pure functions of (input, K, Q, seed). Support and query
//! reference sets are always disjoint; edge episodes keep a 1:1
//! positive:negative ratio on both sides.

use crate::error::{Error, Result};
use crate::graphkit::GraphData;
use crate::numcore::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Node,
    Edge,
    Graph,
}

/// Upper bound on classes per episode; eligible classes beyond it (in
/// ascending label order) are dropped from the draw.
pub const MAX_EPISODE_CLASSES: usize = 64;

/// A single labeled example reference inside an episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExampleRef {
    /// Node id with its episode-local class.
    Node { node: usize, class: usize },
    /// Node pair; class 1 means the edge exists, 0 means non-edge.
    Pair { u: usize, v: usize, class: usize },
    /// Graph list index with its episode-local class.
    Graph { graph: usize, class: usize },
}

impl ExampleRef {
    pub fn class(&self) -> usize {
        match *self {
            ExampleRef::Node { class, .. } => class,
            ExampleRef::Pair { class, .. } => class,
            ExampleRef::Graph { class, .. } => class,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Episode {
    pub task: TaskKind,
    pub support_refs: Vec<ExampleRef>,
    pub query_refs: Vec<ExampleRef>,
    pub k: usize,
    pub q: usize,
    pub c: usize,
}

/// Episode matrices ready for a readout head.
#[derive(Debug, Clone)]
pub struct AssembledEpisode {
    pub z_s: Matrix,
    pub y_s: Matrix,
    pub z_q: Matrix,
    pub y_q: Matrix,
}

/// Seeded partial Fisher-Yates: the first `take` entries of a shuffle.
fn sample_without_replacement(
    pool: &[usize],
    take: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let mut items = pool.to_vec();
    let n = items.len();
    for i in 0..take.min(n) {
        let j = rng.random_range(i..n);
        items.swap(i, j);
    }
    items.truncate(take);
    items
}

/// Groups node ids by label, classes in ascending label order.
fn nodes_by_class(g: &GraphData) -> Result<Vec<(usize, Vec<usize>)>> {
    let labels = g
        .node_labels
        .as_ref()
        .ok_or_else(|| Error::Sampling("graph has no node labels".into()))?;
    let mut max_label = 0;
    for &l in labels {
        max_label = max_label.max(l);
    }
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); max_label + 1];
    for (node, &l) in labels.iter().enumerate() {
        groups[l].push(node);
    }
    Ok(groups
        .into_iter()
        .enumerate()
        .filter(|(_, members)| !members.is_empty())
        .collect())
}

/// Per-class disjoint K/Q node split, uniform without replacement.
///
/// Classes with fewer than K+Q members are excluded; at least two must
/// remain. Episode classes are renumbered 0..C in ascending label order.
pub fn sample_node_episode(g: &GraphData, k: usize, q: usize, seed: u64) -> Result<Episode> {
    if k == 0 || q == 0 {
        return Err(Error::InvalidParam("episode needs K >= 1 and Q >= 1".into()));
    }
    let mut eligible: Vec<(usize, Vec<usize>)> = nodes_by_class(g)?
        .into_iter()
        .filter(|(_, members)| members.len() >= k + q)
        .collect();
    if eligible.len() < 2 {
        return Err(Error::InsufficientClasses(format!(
            "{} classes have at least {} labeled nodes; need 2",
            eligible.len(),
            k + q
        )));
    }
    eligible.truncate(MAX_EPISODE_CLASSES);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut support = Vec::with_capacity(k * eligible.len());
    let mut query = Vec::with_capacity(q * eligible.len());
    for (class, (_, members)) in eligible.iter().enumerate() {
        let picked = sample_without_replacement(members, k + q, &mut rng);
        for &node in &picked[..k] {
            support.push(ExampleRef::Node { node, class });
        }
        for &node in &picked[k..] {
            query.push(ExampleRef::Node { node, class });
        }
    }
    Ok(Episode { task: TaskKind::Node, support_refs: support, query_refs: query, k, q, c: eligible.len() })
}

/// Evaluation-mode node episode: small classes stay in the draw, and their
/// support examples are taken with replacement. Queries always come from
/// nodes outside the support set (with replacement only if it runs short).
pub fn sample_node_episode_eval(
    g: &GraphData,
    k: usize,
    q: usize,
    seed: u64,
) -> Result<Episode> {
    if k == 0 || q == 0 {
        return Err(Error::InvalidParam("episode needs K >= 1 and Q >= 1".into()));
    }
    let groups = nodes_by_class(g)?;
    if groups.len() < 2 {
        return Err(Error::InsufficientClasses(format!(
            "{} labeled classes; need 2",
            groups.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut support = Vec::new();
    let mut query = Vec::new();
    for (class, (_, members)) in groups.iter().enumerate() {
        if members.len() >= k + q {
            let picked = sample_without_replacement(members, k + q, &mut rng);
            for &node in &picked[..k] {
                support.push(ExampleRef::Node { node, class });
            }
            for &node in &picked[k..] {
                query.push(ExampleRef::Node { node, class });
            }
            continue;
        }
        let support_nodes: Vec<usize> =
            (0..k).map(|_| members[rng.random_range(0..members.len())]).collect();
        let remaining: Vec<usize> = members
            .iter()
            .copied()
            .filter(|node| !support_nodes.contains(node))
            .collect();
        if remaining.is_empty() {
            return Err(Error::Sampling(format!(
                "class {class} has no nodes left for queries after support draw"
            )));
        }
        for &node in &support_nodes {
            support.push(ExampleRef::Node { node, class });
        }
        if remaining.len() >= q {
            for &node in sample_without_replacement(&remaining, q, &mut rng).iter() {
                query.push(ExampleRef::Node { node, class });
            }
        } else {
            for _ in 0..q {
                let node = remaining[rng.random_range(0..remaining.len())];
                query.push(ExampleRef::Node { node, class });
            }
        }
    }
    Ok(Episode { task: TaskKind::Node, support_refs: support, query_refs: query, k, q, c: groups.len() })
}

/// Link-prediction episode: K+Q true edges against K+Q non-edges drawn from
/// a fixed pool of 10x the episode demand (built per graph per seed).
/// Class 1 marks a real edge.
pub fn sample_edge_episode(g: &GraphData, k: usize, q: usize, seed: u64) -> Result<Episode> {
    if k == 0 || q == 0 {
        return Err(Error::InvalidParam("episode needs K >= 1 and Q >= 1".into()));
    }
    let need = k + q;
    if g.edges.len() < need {
        return Err(Error::Sampling(format!(
            "graph has {} edges; episode needs {need}",
            g.edges.len()
        )));
    }
    let mut non_edges = Vec::new();
    for u in 0..g.n {
        for v in u + 1..g.n {
            if !g.has_edge(u, v) {
                non_edges.push((u, v));
            }
        }
    }
    if non_edges.len() < need {
        return Err(Error::Sampling(format!(
            "graph has {} non-edges; episode needs {need}",
            non_edges.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let edge_idx: Vec<usize> = (0..g.edges.len()).collect();
    let positives = sample_without_replacement(&edge_idx, need, &mut rng);

    let pool_size = (10 * need).min(non_edges.len());
    let non_idx: Vec<usize> = (0..non_edges.len()).collect();
    let pool = sample_without_replacement(&non_idx, pool_size, &mut rng);
    let negatives = sample_without_replacement(&pool, need, &mut rng);

    let mut support = Vec::with_capacity(2 * k);
    let mut query = Vec::with_capacity(2 * q);
    for i in 0..need {
        let (nu, nv) = non_edges[negatives[i]];
        let (pu, pv) = g.edges[positives[i]];
        let neg = ExampleRef::Pair { u: nu, v: nv, class: 0 };
        let pos = ExampleRef::Pair { u: pu, v: pv, class: 1 };
        if i < k {
            support.push(neg);
            support.push(pos);
        } else {
            query.push(neg);
            query.push(pos);
        }
    }
    Ok(Episode { task: TaskKind::Edge, support_refs: support, query_refs: query, k, q, c: 2 })
}

/// Graph-classification episode over a list of labeled graphs.
pub fn sample_graph_episode(
    graphs: &[GraphData],
    k: usize,
    q: usize,
    seed: u64,
) -> Result<Episode> {
    if k == 0 || q == 0 {
        return Err(Error::InvalidParam("episode needs K >= 1 and Q >= 1".into()));
    }
    let mut max_label = 0;
    for g in graphs {
        if let Some(l) = g.graph_label {
            max_label = max_label.max(l);
        }
    }
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); max_label + 1];
    for (idx, g) in graphs.iter().enumerate() {
        if let Some(l) = g.graph_label {
            groups[l].push(idx);
        }
    }
    let mut eligible: Vec<Vec<usize>> =
        groups.into_iter().filter(|members| members.len() >= k + q).collect();
    if eligible.len() < 2 {
        return Err(Error::InsufficientClasses(format!(
            "{} graph classes have at least {} members; need 2",
            eligible.len(),
            k + q
        )));
    }
    eligible.truncate(MAX_EPISODE_CLASSES);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut support = Vec::with_capacity(k * eligible.len());
    let mut query = Vec::with_capacity(q * eligible.len());
    for (class, members) in eligible.iter().enumerate() {
        let picked = sample_without_replacement(members, k + q, &mut rng);
        for &graph in &picked[..k] {
            support.push(ExampleRef::Graph { graph, class });
        }
        for &graph in &picked[k..] {
            query.push(ExampleRef::Graph { graph, class });
        }
    }
    Ok(Episode { task: TaskKind::Graph, support_refs: support, query_refs: query, k, q, c: eligible.len() })
}

/// Builds the episode matrices from per-graph node embeddings.
///
/// Node and edge tasks read `embeddings[0]`; graph tasks use one matrix per
/// referenced graph index. Node rows are z_v, edge rows are the Hadamard
/// product of endpoint embeddings, graph rows are node-embedding means.
pub fn assemble(episode: &Episode, embeddings: &[Matrix]) -> Result<AssembledEpisode> {
    if embeddings.is_empty() {
        return Err(Error::MissingEmbedding("no embedding matrices supplied".into()));
    }
    let d = embeddings[0].cols();
    let build = |refs: &[ExampleRef]| -> Result<(Matrix, Matrix)> {
        let mut z = Matrix::zeros(refs.len(), d);
        let mut y = Matrix::zeros(refs.len(), episode.c);
        for (row, r) in refs.iter().enumerate() {
            match *r {
                ExampleRef::Node { node, class } => {
                    let emb = &embeddings[0];
                    if node >= emb.rows() {
                        return Err(Error::MissingEmbedding(format!("node {node}")));
                    }
                    for j in 0..d {
                        z[(row, j)] = emb[(node, j)];
                    }
                    y[(row, class)] = 1.0;
                }
                ExampleRef::Pair { u, v, class } => {
                    let emb = &embeddings[0];
                    if u >= emb.rows() || v >= emb.rows() {
                        return Err(Error::MissingEmbedding(format!("pair ({u}, {v})")));
                    }
                    for j in 0..d {
                        z[(row, j)] = emb[(u, j)] * emb[(v, j)];
                    }
                    y[(row, class)] = 1.0;
                }
                ExampleRef::Graph { graph, class } => {
                    let emb = embeddings.get(graph).ok_or_else(|| {
                        Error::MissingEmbedding(format!("graph {graph}"))
                    })?;
                    if emb.rows() == 0 {
                        return Err(Error::MissingEmbedding(format!("graph {graph} is empty")));
                    }
                    let means = emb.col_means();
                    for j in 0..d {
                        z[(row, j)] = means[(0, j)];
                    }
                    y[(row, class)] = 1.0;
                }
            }
        }
        Ok((z, y))
    };
    let (z_s, y_s) = build(&episode.support_refs)?;
    let (z_q, y_q) = build(&episode.query_refs)?;
    Ok(AssembledEpisode { z_s, y_s, z_q, y_q })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphkit::generate_sbm;
    use std::collections::HashSet;

    fn labeled_graph(per_class: &[usize]) -> GraphData {
        let n: usize = per_class.iter().sum();
        let mut g = GraphData::try_new(n, vec![]).unwrap();
        let mut labels = Vec::new();
        for (class, &count) in per_class.iter().enumerate() {
            labels.extend(std::iter::repeat(class).take(count));
        }
        g.node_labels = Some(labels);
        g
    }

    #[test]
    fn node_episode_has_the_contracted_counts_and_is_disjoint() {
        let g = labeled_graph(&[20, 20]);
        let ep = sample_node_episode(&g, 4, 4, 0).unwrap();
        assert_eq!(ep.support_refs.len(), 8);
        assert_eq!(ep.query_refs.len(), 8);
        assert_eq!(ep.c, 2);
        let support: HashSet<_> = ep.support_refs.iter().collect();
        assert!(ep.query_refs.iter().all(|r| !support.contains(r)));
        // Exactly K refs per class on the support side.
        for class in 0..2 {
            let k_count =
                ep.support_refs.iter().filter(|r| r.class() == class).count();
            assert_eq!(k_count, 4);
        }
    }

    #[test]
    fn boundary_split_exhausts_every_class_member() {
        let g = labeled_graph(&[8, 8]);
        let ep = sample_node_episode(&g, 4, 4, 3).unwrap();
        let mut seen: Vec<usize> = ep
            .support_refs
            .iter()
            .chain(&ep.query_refs)
            .map(|r| match *r {
                ExampleRef::Node { node, .. } => node,
                _ => unreachable!(),
            })
            .collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..16).collect::<Vec<_>>());
    }

    #[test]
    fn support_inclusion_frequency_matches_the_hypergeometric_rate() {
        let g = labeled_graph(&[12, 12]);
        let mut counts = vec![0usize; 12];
        let resamples = 1000;
        for seed in 0..resamples {
            let ep = sample_node_episode(&g, 4, 4, seed).unwrap();
            for r in &ep.support_refs {
                if let ExampleRef::Node { node, class: 0 } = *r {
                    counts[node] += 1;
                }
            }
        }
        // Each class-0 node enters the support with probability K/m = 1/3.
        let mean = resamples as f64 / 3.0;
        let sigma = (resamples as f64 * (1.0 / 3.0) * (2.0 / 3.0)).sqrt();
        for (node, &count) in counts.iter().enumerate() {
            assert!(
                (count as f64 - mean).abs() <= 3.0 * sigma,
                "node {node}: {count} vs {mean} +- {sigma}"
            );
        }
    }

    #[test]
    fn small_classes_are_excluded_and_two_must_remain() {
        // Class 1 has only 3 nodes: excluded for K+Q=8, leaving classes 0, 2.
        let g = labeled_graph(&[10, 3, 10]);
        let ep = sample_node_episode(&g, 4, 4, 1).unwrap();
        assert_eq!(ep.c, 2);
        // Only one class is big enough: hard error.
        let g2 = labeled_graph(&[10, 3, 3]);
        assert!(matches!(
            sample_node_episode(&g2, 4, 4, 1),
            Err(Error::InsufficientClasses(_))
        ));
    }

    #[test]
    fn class_count_is_capped_at_sixty_four() {
        let g = labeled_graph(&vec![2usize; 70]);
        let ep = sample_node_episode(&g, 1, 1, 5).unwrap();
        assert_eq!(ep.c, MAX_EPISODE_CLASSES);
        assert_eq!(ep.support_refs.len(), MAX_EPISODE_CLASSES);
    }

    #[test]
    fn node_sampling_is_deterministic_per_seed() {
        let g = labeled_graph(&[30, 30]);
        let a = sample_node_episode(&g, 5, 7, 99).unwrap();
        let b = sample_node_episode(&g, 5, 7, 99).unwrap();
        assert_eq!(a, b);
        let c = sample_node_episode(&g, 5, 7, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn eval_mode_draws_small_class_support_with_replacement() {
        let g = labeled_graph(&[3, 20]);
        let ep = sample_node_episode_eval(&g, 4, 2, 7).unwrap();
        assert_eq!(ep.c, 2);
        let class0_support: Vec<usize> = ep
            .support_refs
            .iter()
            .filter_map(|r| match *r {
                ExampleRef::Node { node, class: 0 } => Some(node),
                _ => None,
            })
            .collect();
        // K refs even though the class has only 3 distinct nodes.
        assert_eq!(class0_support.len(), 4);
        // Queries never reuse a support node.
        let support_set: HashSet<usize> = class0_support.into_iter().collect();
        for r in &ep.query_refs {
            if let ExampleRef::Node { node, class: 0 } = *r {
                assert!(!support_set.contains(&node));
            }
        }
    }

    #[test]
    fn complete_graph_cannot_supply_negatives() {
        let g = generate_sbm(8, &[4, 4], 1.0, 1.0, 0).unwrap();
        assert!(matches!(sample_edge_episode(&g, 2, 2, 0), Err(Error::Sampling(_))));
    }

    #[test]
    fn edge_episode_keeps_the_one_to_one_ratio() {
        let g = generate_sbm(30, &[15, 15], 0.4, 0.1, 11).unwrap();
        let ep = sample_edge_episode(&g, 4, 4, 5).unwrap();
        assert_eq!(ep.support_refs.len(), 8);
        assert_eq!(ep.query_refs.len(), 8);
        for refs in [&ep.support_refs, &ep.query_refs] {
            let pos = refs.iter().filter(|r| r.class() == 1).count();
            assert_eq!(pos * 2, refs.len());
        }
        let support: HashSet<_> = ep.support_refs.iter().collect();
        assert!(ep.query_refs.iter().all(|r| !support.contains(r)));
    }

    #[test]
    fn sampled_negatives_are_never_real_edges() {
        let g = generate_sbm(25, &[13, 12], 0.35, 0.1, 21).unwrap();
        for seed in 0..1000 {
            let ep = sample_edge_episode(&g, 4, 4, seed).unwrap();
            for r in ep.support_refs.iter().chain(&ep.query_refs) {
                if let ExampleRef::Pair { u, v, class: 0 } = *r {
                    assert!(!g.has_edge(u, v), "seed {seed}: ({u}, {v})");
                }
                if let ExampleRef::Pair { u, v, class: 1 } = *r {
                    assert!(g.has_edge(u, v), "seed {seed}: ({u}, {v})");
                }
            }
        }
    }

    #[test]
    fn graph_episode_counts_and_degenerate_error() {
        let mut graphs = Vec::new();
        for i in 0..20 {
            let mut g = generate_sbm(10, &[5, 5], 0.5, 0.1, i).unwrap();
            g.graph_label = Some((i % 2) as usize);
            graphs.push(g);
        }
        let ep = sample_graph_episode(&graphs, 4, 4, 2).unwrap();
        assert_eq!(ep.support_refs.len(), 8);
        assert_eq!(ep.query_refs.len(), 8);

        for g in graphs.iter_mut() {
            g.graph_label = Some(0);
        }
        assert!(matches!(
            sample_graph_episode(&graphs, 4, 4, 2),
            Err(Error::InsufficientClasses(_))
        ));
    }

    #[test]
    fn graph_support_frequencies_match_the_hypergeometric_rate() {
        let mut graphs = Vec::new();
        for i in 0..20 {
            let mut g = generate_sbm(8, &[4, 4], 0.5, 0.1, i).unwrap();
            g.graph_label = Some((i / 10) as usize);
            graphs.push(g);
        }
        let resamples = 1000;
        let mut counts = vec![0usize; 10];
        for seed in 0..resamples {
            let ep = sample_graph_episode(&graphs, 4, 4, seed).unwrap();
            for r in &ep.support_refs {
                if let ExampleRef::Graph { graph, class: 0 } = *r {
                    counts[graph] += 1;
                }
            }
        }
        let mean = resamples as f64 * 0.4;
        let sigma = (resamples as f64 * 0.4 * 0.6).sqrt();
        for (graph, &count) in counts.iter().enumerate() {
            assert!(
                (count as f64 - mean).abs() <= 3.0 * sigma,
                "graph {graph}: {count}"
            );
        }
    }

    #[test]
    fn hadamard_of_all_ones_is_all_ones() {
        let ep = Episode {
            task: TaskKind::Edge,
            support_refs: vec![ExampleRef::Pair { u: 0, v: 1, class: 1 }],
            query_refs: vec![ExampleRef::Pair { u: 1, v: 2, class: 0 }],
            k: 1,
            q: 1,
            c: 2,
        };
        let emb = Matrix::from_fn(3, 4, |_, _| 1.0);
        let asm = assemble(&ep, &[emb]).unwrap();
        for j in 0..4 {
            assert_eq!(asm.z_s[(0, j)], 1.0);
            assert_eq!(asm.z_q[(0, j)], 1.0);
        }
        assert_eq!(asm.y_s[(0, 1)], 1.0);
        assert_eq!(asm.y_q[(0, 0)], 1.0);
    }

    #[test]
    fn constant_node_embeddings_give_that_constant_graph_mean() {
        let ep = Episode {
            task: TaskKind::Graph,
            support_refs: vec![ExampleRef::Graph { graph: 0, class: 0 }],
            query_refs: vec![ExampleRef::Graph { graph: 1, class: 1 }],
            k: 1,
            q: 1,
            c: 2,
        };
        let e0 = Matrix::from_fn(5, 3, |_, j| j as f64 + 1.0);
        let e1 = Matrix::from_fn(2, 3, |_, j| -(j as f64));
        let asm = assemble(&ep, &[e0, e1]).unwrap();
        for j in 0..3 {
            assert_eq!(asm.z_s[(0, j)], j as f64 + 1.0);
            assert_eq!(asm.z_q[(0, j)], -(j as f64));
        }
    }

    #[test]
    fn assembly_matches_a_brute_force_oracle() {
        let g = generate_sbm(20, &[10, 10], 0.5, 0.2, 8).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let emb = Matrix::gaussian(20, 6, &mut rng);
        let ep = sample_node_episode(&g, 3, 3, 14).unwrap();
        let asm = assemble(&ep, &[emb.clone()]).unwrap();
        for (row, r) in ep.support_refs.iter().enumerate() {
            if let ExampleRef::Node { node, class } = *r {
                for j in 0..6 {
                    assert_eq!(asm.z_s[(row, j)], emb[(node, j)]);
                }
                assert_eq!(asm.y_s[(row, class)], 1.0);
            }
        }
    }

    #[test]
    fn doubling_embeddings_scales_rows_by_task_order() {
        let g = generate_sbm(24, &[12, 12], 0.5, 0.2, 3).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let emb = Matrix::gaussian(24, 5, &mut rng);
        let doubled = emb.scale(2.0);

        let node_ep = sample_node_episode(&g, 3, 3, 9).unwrap();
        let a = assemble(&node_ep, &[emb.clone()]).unwrap();
        let b = assemble(&node_ep, &[doubled.clone()]).unwrap();
        assert_eq!(a.z_s.scale(2.0), b.z_s);

        let edge_ep = sample_edge_episode(&g, 3, 3, 9).unwrap();
        let a = assemble(&edge_ep, &[emb.clone()]).unwrap();
        let b = assemble(&edge_ep, &[doubled.clone()]).unwrap();
        // Hadamard rows pick up the square of the scale; x4 is exact in
        // binary floating point.
        assert_eq!(a.z_s.scale(4.0), b.z_s);

        let graph_ep = Episode {
            task: TaskKind::Graph,
            support_refs: vec![ExampleRef::Graph { graph: 0, class: 0 }],
            query_refs: vec![ExampleRef::Graph { graph: 0, class: 1 }],
            k: 1,
            q: 1,
            c: 2,
        };
        let a = assemble(&graph_ep, &[emb.clone()]).unwrap();
        let b = assemble(&graph_ep, &[doubled]).unwrap();
        assert_eq!(a.z_s.scale(2.0), b.z_s);
    }

    #[test]
    fn missing_embeddings_name_the_reference() {
        let ep = Episode {
            task: TaskKind::Node,
            support_refs: vec![ExampleRef::Node { node: 9, class: 0 }],
            query_refs: vec![ExampleRef::Node { node: 0, class: 1 }],
            k: 1,
            q: 1,
            c: 2,
        };
        let emb = Matrix::zeros(5, 2);
        match assemble(&ep, &[emb]) {
            Err(Error::MissingEmbedding(msg)) => assert!(msg.contains('9'), "{msg}"),
            other => panic!("expected MissingEmbedding, got {other:?}"),
        }
        let graph_ep = Episode {
            task: TaskKind::Graph,
            support_refs: vec![ExampleRef::Graph { graph: 3, class: 0 }],
            query_refs: vec![],
            k: 1,
            q: 0,
            c: 2,
        };
        assert!(matches!(
            assemble(&graph_ep, &[Matrix::zeros(2, 2)]),
            Err(Error::MissingEmbedding(_))
        ));
    }
}
