use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::entropy::EntropySequence;
use crate::error::{RareError, Result};
use crate::gnn::TrainMetrics;
use crate::graph::Graph;

pub const DEFAULT_K_MAX: usize = 10;

/// Per-node upper limits on the add count `k` and delete count `d`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateBounds {
    pub k_max: Vec<usize>,
    pub d_max: Vec<usize>,
}

impl StateBounds {
    /// `k_i <= min(k_cap, |add_i|)` and `d_i <= min(d_cap, deg_i)`.
    pub fn new(graph: &Graph, sequences: &EntropySequence, k_cap: usize, d_cap: usize) -> Result<Self> {
        let n = graph.num_nodes();
        if sequences.num_nodes() != n {
            return Err(RareError::DimensionMismatch(format!(
                "entropy sequences cover {} nodes, graph has {n}",
                sequences.num_nodes()
            )));
        }
        let k_max = sequences.add_candidates.iter().map(|c| c.len().min(k_cap)).collect();
        let d_max = (0..n).map(|v| graph.degree(v).min(d_cap)).collect();
        Ok(Self { k_max, d_max })
    }

    /// Bounds with `K_max` on additions and no cap on deletions beyond degree.
    pub fn standard(graph: &Graph, sequences: &EntropySequence, k_cap: usize) -> Result<Self> {
        Self::new(graph, sequences, k_cap, usize::MAX)
    }

    pub fn num_nodes(&self) -> usize {
        self.k_max.len()
    }

    pub fn without_additions(mut self) -> Self {
        self.k_max.iter_mut().for_each(|k| *k = 0);
        self
    }

    pub fn without_removals(mut self) -> Self {
        self.d_max.iter_mut().for_each(|d| *d = 0);
        self
    }

    /// Number of admissible states, or `None` on overflow.
    pub fn state_count(&self) -> Option<u128> {
        self.k_max
            .iter()
            .chain(&self.d_max)
            .try_fold(1u128, |acc, &m| acc.checked_mul(m as u128 + 1))
    }

    pub fn contains(&self, state: &RewireState) -> bool {
        state.k.len() == self.k_max.len()
            && state.d.len() == self.d_max.len()
            && state.k.iter().zip(&self.k_max).all(|(k, m)| k <= m)
            && state.d.iter().zip(&self.d_max).all(|(d, m)| d <= m)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RewireState {
    pub k: Vec<usize>,
    pub d: Vec<usize>,
    pub step: usize,
}

impl RewireState {
    pub fn zeros(n: usize) -> Self {
        Self { k: vec![0; n], d: vec![0; n], step: 0 }
    }

    pub fn num_nodes(&self) -> usize {
        self.k.len()
    }

    /// `[k_1..k_N, d_1..d_N] / scale`, the policy input.
    pub fn features(&self, scale: f64) -> Vec<f64> {
        self.k.iter().chain(&self.d).map(|&x| x as f64 / scale).collect()
    }

    /// L1 distance over the `(k, d)` coordinates, ignoring `step`.
    pub fn edit_distance(&self, other: &RewireState) -> usize {
        self.k
            .iter()
            .zip(&other.k)
            .chain(self.d.iter().zip(&other.d))
            .map(|(a, b)| a.abs_diff(*b))
            .sum()
    }

    pub fn mean_k(&self) -> f64 {
        mean(&self.k)
    }

    pub fn mean_d(&self) -> f64 {
        mean(&self.d)
    }
}

fn mean(xs: &[usize]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<usize>() as f64 / xs.len() as f64
    }
}

/// Per-node increments, each in `{-1, 0, +1}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewireAction {
    pub dk: Vec<i8>,
    pub dd: Vec<i8>,
}

impl RewireAction {
    pub fn noop(n: usize) -> Self {
        Self { dk: vec![0; n], dd: vec![0; n] }
    }

    /// Head index `j` in `0..2N` with choice `c` in `0..3` maps to delta `c - 1`.
    pub fn from_choices(choices: &[usize]) -> Self {
        let n = choices.len() / 2;
        let delta = |c: usize| c as i8 - 1;
        Self {
            dk: choices[..n].iter().map(|&c| delta(c)).collect(),
            dd: choices[n..].iter().map(|&c| delta(c)).collect(),
        }
    }

    pub fn choices(&self) -> Vec<usize> {
        self.dk.iter().chain(&self.dd).map(|&x| (x + 1) as usize).collect()
    }

    pub fn negated(&self) -> Self {
        Self {
            dk: self.dk.iter().map(|x| -x).collect(),
            dd: self.dd.iter().map(|x| -x).collect(),
        }
    }
}

fn step_clamped(x: usize, delta: i8, max: usize) -> usize {
    (x as i64 + delta as i64).clamp(0, max as i64) as usize
}

/// `S + A` clamped into `bounds`.
pub fn transition(state: &RewireState, action: &RewireAction, bounds: &StateBounds) -> Result<RewireState> {
    let n = bounds.num_nodes();
    if state.k.len() != n || state.d.len() != n || action.dk.len() != n || action.dd.len() != n {
        return Err(RareError::DimensionMismatch(format!(
            "transition expects {n} nodes, got state {}/{} and action {}/{}",
            state.k.len(),
            state.d.len(),
            action.dk.len(),
            action.dd.len()
        )));
    }
    if action.dk.iter().chain(&action.dd).any(|x| !(-1..=1).contains(x)) {
        return Err(RareError::invalid("action entries must lie in {-1, 0, 1}"));
    }
    let k = (0..n)
        .map(|i| step_clamped(state.k[i], action.dk[i], bounds.k_max[i]))
        .collect();
    let d = (0..n)
        .map(|i| step_clamped(state.d[i], action.dd[i], bounds.d_max[i]))
        .collect();
    Ok(RewireState { k, d, step: state.step + 1 })
}

fn canonical(u: usize, v: usize) -> (usize, usize) {
    if u < v {
        (u, v)
    } else {
        (v, u)
    }
}

/// Edge list of the graph encoded by `state`, always derived from the
/// original edge set. Removals are resolved before additions.
pub fn rewired_edges(original: &Graph, state: &RewireState, sequences: &EntropySequence) -> Result<Vec<(usize, usize)>> {
    let n = original.num_nodes();
    if state.k.len() != n || state.d.len() != n || sequences.num_nodes() != n {
        return Err(RareError::DimensionMismatch(format!(
            "rewiring a {n}-node graph with state of {} nodes and sequences of {}",
            state.k.len(),
            sequences.num_nodes()
        )));
    }
    for v in 0..n {
        if state.k[v] > sequences.add_candidates[v].len() {
            return Err(RareError::invalid(format!(
                "node {v}: k = {} exceeds {} add candidates",
                state.k[v],
                sequences.add_candidates[v].len()
            )));
        }
        if state.d[v] > sequences.delete_candidates[v].len() {
            return Err(RareError::invalid(format!(
                "node {v}: d = {} exceeds degree {}",
                state.d[v],
                sequences.delete_candidates[v].len()
            )));
        }
    }
    let removed: HashSet<(usize, usize)> = (0..n)
        .flat_map(|v| sequences.delete_candidates[v][..state.d[v]].iter().map(move |&u| canonical(u, v)))
        .collect();
    let mut edges: Vec<(usize, usize)> = original
        .edges()
        .iter()
        .copied()
        .filter(|e| !removed.contains(e))
        .collect();
    for v in 0..n {
        edges.extend(sequences.add_candidates[v][..state.k[v]].iter().map(|&u| canonical(u, v)));
    }
    edges.sort_unstable();
    edges.dedup();
    Ok(edges)
}

pub fn apply_rewire(original: &Graph, state: &RewireState, sequences: &EntropySequence) -> Result<Graph> {
    original.with_edges(rewired_edges(original, state, sequences)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardParams {
    pub lambda_r: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self { lambda_r: 1.0 }
    }
}

/// Accuracy gain plus `lambda_r` times the loss decrease.
pub fn reward(curr: &TrainMetrics, prev: &TrainMetrics, params: RewardParams) -> f64 {
    (curr.accuracy - prev.accuracy) + params.lambda_r * (prev.loss - curr.loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn graph(n: usize, edges: &[(usize, usize)]) -> Graph {
        Graph::new(Array2::zeros((n, 1)), vec![0; n], 2, edges.iter().copied()).unwrap()
    }

    fn one_node_bounds(k: usize, d: usize) -> StateBounds {
        StateBounds { k_max: vec![k], d_max: vec![d] }
    }

    #[test]
    fn transition_arithmetic_and_clamps() {
        let s = RewireState { k: vec![2], d: vec![1], step: 0 };
        let a = RewireAction { dk: vec![1], dd: vec![-1] };
        let t = transition(&s, &a, &one_node_bounds(10, 2)).unwrap();
        assert_eq!((t.k.clone(), t.d.clone(), t.step), (vec![3], vec![0], 1));

        let low = transition(&RewireState::zeros(1), &RewireAction { dk: vec![-1], dd: vec![0] }, &one_node_bounds(10, 2));
        assert_eq!(low.unwrap().k, vec![0]);

        let s = RewireState { k: vec![0], d: vec![2], step: 0 };
        let high = transition(&s, &RewireAction { dk: vec![0], dd: vec![1] }, &one_node_bounds(10, 2));
        assert_eq!(high.unwrap().d, vec![2]);

        let bad = RewireAction { dk: vec![2], dd: vec![0] };
        assert!(transition(&RewireState::zeros(1), &bad, &one_node_bounds(10, 2)).is_err());
    }

    #[test]
    fn bounds_follow_candidates_and_degree() {
        let g = graph(4, &[(0, 1), (0, 2), (0, 3)]);
        let seq = EntropySequence {
            add_candidates: vec![vec![], vec![2, 3], vec![1, 3], vec![1, 2]],
            delete_candidates: vec![vec![1, 2, 3], vec![0], vec![0], vec![0]],
        };
        let b = StateBounds::standard(&g, &seq, 1).unwrap();
        assert_eq!(b.k_max, vec![0, 1, 1, 1]);
        assert_eq!(b.d_max, vec![3, 1, 1, 1]);
        assert_eq!(b.state_count(), Some(4 * 4 * 4 * 4));
        assert_eq!(b.clone().without_removals().d_max, vec![0; 4]);
        assert_eq!(b.without_additions().k_max, vec![0; 4]);
    }

    #[test]
    fn star_hub_rewiring() {
        // Hub 0 with five leaves plus a distant triangle; the hub adds three
        // of the triangle nodes and drops two leaves.
        let g = graph(9, &[(0, 1), (0, 2), (0, 3), (0, 4), (0, 5), (6, 7), (7, 8), (6, 8)]);
        let mut add: Vec<Vec<usize>> = (0..9)
            .map(|v| (0..9).filter(|&u| u != v && !g.has_edge(u, v)).collect())
            .collect();
        add[0] = vec![7, 6, 8];
        let mut del: Vec<Vec<usize>> = (0..9).map(|v| g.neighbors(v).to_vec()).collect();
        del[0] = vec![4, 2, 1, 3, 5];
        let seq = EntropySequence { add_candidates: add, delete_candidates: del };
        let mut s = RewireState::zeros(9);
        s.k[0] = 3;
        s.d[0] = 2;
        let out = apply_rewire(&g, &s, &seq).unwrap();
        assert_eq!(out.num_edges(), g.num_edges() + 3 - 2);
        assert!(!out.has_edge(0, 4) && !out.has_edge(0, 2));
        assert!(out.has_edge(0, 6) && out.has_edge(0, 7) && out.has_edge(0, 8));
        assert!(out.has_edge(0, 1) && out.has_edge(0, 3) && out.has_edge(0, 5));
    }

    #[test]
    fn zero_state_is_identity_and_mutual_nomination_adds_once() {
        let g = graph(3, &[(0, 1)]);
        let seq = EntropySequence {
            add_candidates: vec![vec![2], vec![2], vec![0, 1]],
            delete_candidates: vec![vec![1], vec![0], vec![]],
        };
        let same = apply_rewire(&g, &RewireState::zeros(3), &seq).unwrap();
        assert_eq!(same.edges(), g.edges());

        let s = RewireState { k: vec![1, 0, 1], d: vec![1, 1, 0], step: 0 };
        let out = apply_rewire(&g, &s, &seq).unwrap();
        assert_eq!(out.edges(), &[(0, 2)]);

        let over = RewireState { k: vec![2, 0, 0], d: vec![0, 0, 0], step: 0 };
        assert!(apply_rewire(&g, &over, &seq).is_err());
    }

    #[test]
    fn reward_examples() {
        let m = |accuracy, loss| TrainMetrics { accuracy, loss, epoch: 0 };
        let r = reward(&m(0.8, 0.8), &m(0.7, 0.9), RewardParams::default());
        assert!((r - 0.2).abs() < 1e-12);
        assert_eq!(reward(&m(0.5, 0.3), &m(0.5, 0.3), RewardParams::default()), 0.0);
        let r0 = reward(&m(0.8, 0.1), &m(0.7, 0.9), RewardParams { lambda_r: 0.0 });
        assert!((r0 - 0.1).abs() < 1e-12);
    }

    #[test]
    fn choices_round_trip() {
        let a = RewireAction { dk: vec![-1, 0], dd: vec![1, 1] };
        assert_eq!(a.choices(), vec![0, 1, 2, 2]);
        assert_eq!(RewireAction::from_choices(&a.choices()), a);
        assert_eq!(a.negated().negated(), a);
    }
}
