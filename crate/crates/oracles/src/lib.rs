//! Brute-force reference implementations for testing `rare-core`.
//!
//! Everything here is written as plain nested loops over dense storage and
//! deliberately avoids the core crate's numerical kernels. The one exception
//! is [`oracle_grad`], which calls the core forward and backward passes
//! because those are what it checks.

use std::collections::BTreeSet;

use ndarray::Array2;
use rare_core::gnn::{forward, loss_and_grad, GraphInput};
use rare_core::rl::{RewireState, StateBounds};
use rare_core::{Backbone, EntropySequence, GcnModel, Graph};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("instance too large for exhaustive evaluation: {0}")]
    TooLarge(String),
    #[error("{0}")]
    Core(String),
}

/// Worst-case agreement between an implementation and an oracle.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OracleReport {
    pub max_abs_error: f64,
    pub max_rel_error: f64,
    pub instances: usize,
    /// First instance whose error exceeded the tolerance.
    pub failing_seed: Option<u64>,
}

impl OracleReport {
    /// Folds another instance's errors in, recording `seed` if it is the
    /// first one over `tolerance` (compared against relative error).
    pub fn absorb(&mut self, other: &OracleReport, seed: u64, tolerance: f64) {
        self.max_abs_error = self.max_abs_error.max(other.max_abs_error);
        self.max_rel_error = self.max_rel_error.max(other.max_rel_error);
        self.instances += other.instances;
        if self.failing_seed.is_none() && other.max_rel_error > tolerance {
            self.failing_seed = Some(seed);
        }
    }
}

/// Dense feature, structural and combined entropy matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyMatrices {
    pub feature: Vec<Vec<f64>>,
    pub structural: Vec<Vec<f64>>,
    pub combined: Vec<Vec<f64>>,
}

fn xlogx_ratio(p: f64, m: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else {
        p * (p / m).log2()
    }
}

fn dense_adjacency(graph: &Graph) -> Vec<Vec<bool>> {
    let n = graph.num_nodes();
    let mut a = vec![vec![false; n]; n];
    for &(u, v) in graph.edges() {
        a[u][v] = true;
        a[v][u] = true;
    }
    a
}

fn degrees(adj: &[Vec<bool>]) -> Vec<usize> {
    adj.iter().map(|row| row.iter().filter(|&&x| x).count()).collect()
}

/// Normalised degree profile padded to length `n`; point mass for a node
/// whose profile sums to zero.
fn profile(adj: &[Vec<bool>], deg: &[usize], v: usize) -> Vec<f64> {
    let n = adj.len();
    let mut seq = vec![deg[v]];
    for u in 0..n {
        if adj[v][u] {
            seq.push(deg[u]);
        }
    }
    // Selection sort, descending.
    for i in 0..seq.len() {
        for j in i + 1..seq.len() {
            if seq[j] > seq[i] {
                seq.swap(i, j);
            }
        }
    }
    let mut p = vec![0.0; n + 1];
    let total: usize = seq.iter().sum();
    if total == 0 {
        p[0] = 1.0;
        return p;
    }
    for (i, &x) in seq.iter().enumerate() {
        p[i] = x as f64 / total as f64;
    }
    p
}

/// Literal evaluation of the pairwise entropies. Feature entropy uses the
/// unstabilised softmax over all ordered pairs with natural logs; structural
/// entropy is `1 - JS` with base-2 logs.
pub fn oracle_entropy(graph: &Graph, embeddings: &Array2<f64>, lambda: f64) -> EntropyMatrices {
    let n = graph.num_nodes();
    let h = embeddings.ncols();
    let mut dots = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..h {
                s += embeddings[[i, k]] * embeddings[[j, k]];
            }
            dots[i][j] = s;
        }
    }
    let mut z = 0.0;
    for row in &dots {
        for &d in row {
            z += d.exp();
        }
    }
    let mut feature = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let p = dots[i][j].exp() / z;
            feature[i][j] = if p == 0.0 { 0.0 } else { -p * p.ln() };
        }
    }

    let adj = dense_adjacency(graph);
    let deg = degrees(&adj);
    let profiles: Vec<Vec<f64>> = (0..n).map(|v| profile(&adj, &deg, v)).collect();
    let mut structural = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let (p, q) = (&profiles[i], &profiles[j]);
            let mut kl_p = 0.0;
            let mut kl_q = 0.0;
            for t in 0..p.len() {
                let m = (p[t] + q[t]) / 2.0;
                kl_p += xlogx_ratio(p[t], m);
                kl_q += xlogx_ratio(q[t], m);
            }
            structural[i][j] = 1.0 - 0.5 * (kl_p + kl_q);
        }
    }

    let mut combined = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            combined[i][j] = feature[i][j] + lambda * structural[i][j];
        }
    }
    EntropyMatrices { feature, structural, combined }
}

/// Dense aggregation matrix: symmetric-normalised `A + I` for GCN, row mean
/// over neighbours (no self loop) for SAGE.
pub fn oracle_normalized_adjacency(graph: &Graph, backbone: Backbone) -> Vec<Vec<f64>> {
    let adj = dense_adjacency(graph);
    let n = adj.len();
    let mut out = vec![vec![0.0; n]; n];
    match backbone {
        Backbone::Gcn => {
            let deg: Vec<f64> = degrees(&adj).iter().map(|&d| d as f64 + 1.0).collect();
            for i in 0..n {
                for j in 0..n {
                    if i == j || adj[i][j] {
                        out[i][j] = 1.0 / (deg[i] * deg[j]).sqrt();
                    }
                }
            }
        }
        Backbone::SageMean => {
            let deg = degrees(&adj);
            for i in 0..n {
                for j in 0..n {
                    if adj[i][j] {
                        out[i][j] = 1.0 / deg[i] as f64;
                    }
                }
            }
        }
    }
    out
}

fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (n, k, m) = (a.len(), b.len(), b.first().map_or(0, |r| r.len()));
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            let mut s = 0.0;
            for t in 0..k {
                s += a[i][t] * b[t][j];
            }
            out[i][j] = s;
        }
    }
    out
}

fn to_rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.outer_iter().map(|r| r.to_vec()).collect()
}

fn aggregate(backbone: Backbone, op: &[Vec<f64>], h: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let agg = matmul(op, h);
    match backbone {
        Backbone::Gcn => agg,
        Backbone::SageMean => h
            .iter()
            .zip(agg)
            .map(|(own, nb)| own.iter().copied().chain(nb).collect())
            .collect(),
    }
}

/// Objective the analytic gradient differentiates: masked mean cross-entropy
/// plus `weight_decay / 2` times the squared weight norms. No dropout.
pub fn oracle_loss(
    backbone: Backbone,
    w1: &Array2<f64>,
    w2: &Array2<f64>,
    graph: &Graph,
    mask: &[bool],
    weight_decay: f64,
) -> f64 {
    let op = oracle_normalized_adjacency(graph, backbone);
    let x = to_rows(graph.features());
    let pre = matmul(&aggregate(backbone, &op, &x), &to_rows(w1));
    let hidden: Vec<Vec<f64>> = pre.iter().map(|r| r.iter().map(|&z| if z > 0.0 { z } else { 0.0 }).collect()).collect();
    let logits = matmul(&aggregate(backbone, &op, &hidden), &to_rows(w2));
    let labels = graph.labels();
    let mut loss = 0.0;
    let mut count = 0;
    for v in 0..logits.len() {
        if !mask[v] {
            continue;
        }
        let mut z = 0.0;
        for &l in &logits[v] {
            z += l.exp();
        }
        loss += z.ln() - logits[v][labels[v]];
        count += 1;
    }
    let mut l2 = 0.0;
    for w in w1.iter().chain(w2.iter()) {
        l2 += w * w;
    }
    loss / count as f64 + 0.5 * weight_decay * l2
}

/// Central finite differences of [`oracle_loss`] for every weight entry,
/// compared with the core analytic gradient. Relative error per entry is
/// `|a - f| / max(|a|, |f|, 1e-6)`.
pub fn oracle_grad(model: &GcnModel, graph: &Graph, mask: &[bool], weight_decay: f64, step: f64) -> Result<OracleReport, OracleError> {
    if graph.num_nodes() > 8 {
        return Err(OracleError::TooLarge(format!("{} nodes, cap is 8", graph.num_nodes())));
    }
    let input = GraphInput::new(graph, model.backbone);
    let (logits, cache) = forward(model, &input, None).map_err(|e| OracleError::Core(e.to_string()))?;
    let (_, grads) = loss_and_grad(model, &input, &cache, &logits, graph.labels(), mask, weight_decay)
        .map_err(|e| OracleError::Core(e.to_string()))?;
    let mut report = OracleReport { instances: 1, ..OracleReport::default() };
    for layer in 0..2 {
        let (rows, cols) = if layer == 0 { model.w1.dim() } else { model.w2.dim() };
        for r in 0..rows {
            for c in 0..cols {
                let eval = |delta: f64| {
                    let mut w1 = model.w1.clone();
                    let mut w2 = model.w2.clone();
                    if layer == 0 {
                        w1[[r, c]] += delta;
                    } else {
                        w2[[r, c]] += delta;
                    }
                    oracle_loss(model.backbone, &w1, &w2, graph, mask, weight_decay)
                };
                let fd = (eval(step) - eval(-step)) / (2.0 * step);
                let analytic = if layer == 0 { grads.w1[[r, c]] } else { grads.w2[[r, c]] };
                let abs = (fd - analytic).abs();
                let rel = abs / fd.abs().max(analytic.abs()).max(1e-6);
                report.max_abs_error = report.max_abs_error.max(abs);
                report.max_rel_error = report.max_rel_error.max(rel);
            }
        }
    }
    Ok(report)
}

/// Edges removed and added by `state`, and the resulting edge set
/// `original \ removals ∪ additions`, by direct set algebra.
#[derive(Debug, Clone, PartialEq)]
pub struct RewireSets {
    pub removals: BTreeSet<(usize, usize)>,
    pub additions: BTreeSet<(usize, usize)>,
    pub result: BTreeSet<(usize, usize)>,
}

fn ordered(u: usize, v: usize) -> (usize, usize) {
    (u.min(v), u.max(v))
}

pub fn oracle_rewire(graph: &Graph, state: &RewireState, sequences: &EntropySequence) -> RewireSets {
    let original: BTreeSet<(usize, usize)> = graph.edges().iter().copied().collect();
    let mut removals = BTreeSet::new();
    let mut additions = BTreeSet::new();
    for v in 0..graph.num_nodes() {
        for i in 0..state.d[v] {
            removals.insert(ordered(v, sequences.delete_candidates[v][i]));
        }
        for i in 0..state.k[v] {
            additions.insert(ordered(v, sequences.add_candidates[v][i]));
        }
    }
    let kept: BTreeSet<(usize, usize)> = original.difference(&removals).copied().collect();
    let result = kept.union(&additions).copied().collect();
    RewireSets { removals, additions, result }
}

/// Candidate rankings by full sort: non-neighbours by descending combined
/// entropy, neighbours by ascending, ties by ascending id.
pub fn oracle_sequences(graph: &Graph, combined: &[Vec<f64>]) -> EntropySequence {
    let adj = dense_adjacency(graph);
    let n = adj.len();
    let mut add_candidates = Vec::with_capacity(n);
    let mut delete_candidates = Vec::with_capacity(n);
    for v in 0..n {
        let mut add: Vec<usize> = (0..n).filter(|&u| u != v && !adj[v][u]).collect();
        add.sort_by(|&a, &b| combined[v][b].partial_cmp(&combined[v][a]).unwrap().then(a.cmp(&b)));
        let mut del: Vec<usize> = (0..n).filter(|&u| adj[v][u]).collect();
        del.sort_by(|&a, &b| combined[v][a].partial_cmp(&combined[v][b]).unwrap().then(a.cmp(&b)));
        add_candidates.push(add);
        delete_candidates.push(del);
    }
    EntropySequence { add_candidates, delete_candidates }
}

/// Per-node limits `min(k_cap, |add_v|)` and `min(d_cap, deg_v)`.
pub fn oracle_bounds(graph: &Graph, sequences: &EntropySequence, k_cap: usize, d_cap: usize) -> StateBounds {
    let adj = dense_adjacency(graph);
    let deg = degrees(&adj);
    StateBounds {
        k_max: sequences.add_candidates.iter().map(|c| c.len().min(k_cap)).collect(),
        d_max: deg.iter().map(|&d| d.min(d_cap)).collect(),
    }
}

pub const MAX_EXHAUSTIVE_NODES: usize = 6;

/// Every admissible state in lexicographic order of `[k_1..k_N, d_1..d_N]`.
pub fn enumerate_states(bounds: &StateBounds) -> Result<Vec<RewireState>, OracleError> {
    let n = bounds.k_max.len();
    if n > MAX_EXHAUSTIVE_NODES {
        return Err(OracleError::TooLarge(format!("{n} nodes, cap is {MAX_EXHAUSTIVE_NODES}")));
    }
    let limits: Vec<usize> = bounds.k_max.iter().chain(&bounds.d_max).copied().collect();
    if limits.iter().any(|&m| m > 2) {
        return Err(OracleError::TooLarge("per-node bounds above 2".into()));
    }
    let mut out = Vec::new();
    let mut digits = vec![0usize; 2 * n];
    loop {
        out.push(RewireState { k: digits[..n].to_vec(), d: digits[n..].to_vec(), step: 0 });
        // Odometer increment with the last coordinate fastest.
        let mut pos = 2 * n;
        loop {
            if pos == 0 {
                return Ok(out);
            }
            pos -= 1;
            if digits[pos] < limits[pos] {
                digits[pos] += 1;
                for d in digits.iter_mut().skip(pos + 1) {
                    *d = 0;
                }
                break;
            }
        }
    }
}

/// Exhaustive argmax of `evaluator` over admissible states; the
/// lexicographically smallest state wins ties.
pub fn oracle_best_state<F>(bounds: &StateBounds, mut evaluator: F) -> Result<(RewireState, f64), OracleError>
where
    F: FnMut(&RewireState) -> f64,
{
    let mut best: Option<(RewireState, f64)> = None;
    for s in enumerate_states(bounds)? {
        let score = evaluator(&s);
        if best.as_ref().is_none_or(|(_, b)| score > *b) {
            best = Some((s, score));
        }
    }
    Ok(best.expect("the zero state is always admissible"))
}

/// All admissible states whose score equals the maximum.
pub fn oracle_optimal_states<F>(bounds: &StateBounds, mut evaluator: F) -> Result<(Vec<RewireState>, f64), OracleError>
where
    F: FnMut(&RewireState) -> f64,
{
    let scored: Vec<(RewireState, f64)> = enumerate_states(bounds)?.into_iter().map(|s| {
        let v = evaluator(&s);
        (s, v)
    }).collect();
    let best = scored.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    Ok((scored.into_iter().filter(|s| s.1 == best).map(|s| s.0).collect(), best))
}

/// Fraction of edges joining same-label endpoints; 0 for no edges.
pub fn oracle_homophily(labels: &[usize], edges: &BTreeSet<(usize, usize)>) -> f64 {
    if edges.is_empty() {
        return 0.0;
    }
    let mut same = 0;
    for &(u, v) in edges {
        if labels[u] == labels[v] {
            same += 1;
        }
    }
    same as f64 / edges.len() as f64
}
