//! Pairwise node entropy and the ranked candidate sequences derived from it.
//!
//! Three symmetric `N x N` matrices are produced once per graph:
//!
//! - feature entropy `H_f(v,u) = -P log P`, where `P` is the softmax of the
//!   embedding dot product `<z_v, z_u>` over all ordered pairs (self pairs
//!   included), natural log;
//! - structural entropy `H_s(v,u) = 1 - JS(p(v), p(u))`, the base-2
//!   Jensen-Shannon similarity of the two nodes' normalised ego-degree
//!   profiles, so `H_s` lies in `[0, 1]` with `H_s(v,v) = 1`;
//! - combined entropy `H = H_f + lambda * H_s`.
//!
//! Larger values mean "more alike" for all three.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{RareError, Result};
use crate::graph::Graph;

/// Largest graph for which the dense pairwise tables are materialised.
pub const DENSE_NODE_LIMIT: usize = 20_000;

/// Embedding width used when features are wider than this.
pub const DEFAULT_PROJECTION_DIM: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingMode {
    Identity,
    Projection,
}

/// Fixed, untrained feature map applied before feature entropy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbeddingConfig {
    pub target_dim: usize,
    pub projection_seed: u64,
    pub mode: EmbeddingMode,
}

impl EmbeddingConfig {
    pub fn identity(feature_dim: usize) -> Self {
        EmbeddingConfig {
            target_dim: feature_dim,
            projection_seed: 0,
            mode: EmbeddingMode::Identity,
        }
    }

    pub fn projection(target_dim: usize, seed: u64) -> Self {
        EmbeddingConfig {
            target_dim,
            projection_seed: seed,
            mode: EmbeddingMode::Projection,
        }
    }

    /// Identity up to [`DEFAULT_PROJECTION_DIM`] features, seeded projection
    /// to that width beyond it.
    pub fn auto(feature_dim: usize, seed: u64) -> Self {
        if feature_dim <= DEFAULT_PROJECTION_DIM {
            Self::identity(feature_dim)
        } else {
            Self::projection(DEFAULT_PROJECTION_DIM, seed)
        }
    }
}

/// Applies the feature map. Projection multiplies by a `d x h` matrix of
/// standard normal draws scaled by `1/sqrt(d)`.
pub fn embed(features: &Array2<f64>, config: &EmbeddingConfig) -> Result<Array2<f64>> {
    let d = features.ncols();
    if config.target_dim == 0 {
        return Err(RareError::invalid("embedding dimension must be at least 1"));
    }
    match config.mode {
        EmbeddingMode::Identity => {
            if config.target_dim != d {
                return Err(RareError::DimensionMismatch(format!(
                    "identity embedding needs target_dim == {d}, got {}",
                    config.target_dim
                )));
            }
            Ok(features.clone())
        }
        EmbeddingMode::Projection => {
            if d == 0 {
                return Err(RareError::DimensionMismatch("features have zero columns".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(config.projection_seed);
            let scale = 1.0 / (d as f64).sqrt();
            let proj = Array2::from_shape_fn((d, config.target_dim), |_| {
                let g: f64 = StandardNormal.sample(&mut rng);
                g * scale
            });
            Ok(features.dot(&proj))
        }
    }
}

fn check_finite(m: ArrayView2<f64>, what: &str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(RareError::NonFinite(what.to_string()))
    }
}

fn symmetric_from_upper<F>(n: usize, entry: F) -> Array2<f64>
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (i..n).map(|j| entry(i, j)).collect())
        .collect();
    let mut out = Array2::zeros((n, n));
    for (i, row) in rows.into_iter().enumerate() {
        for (off, x) in row.into_iter().enumerate() {
            out[[i, i + off]] = x;
            out[[i + off, i]] = x;
        }
    }
    out
}

/// Softmax of embedding dot products over all `N^2` ordered pairs,
/// computed with a log-sum-exp shift.
pub fn pair_probabilities(embeddings: &Array2<f64>) -> Result<Array2<f64>> {
    let n = embeddings.nrows();
    if n < 2 {
        return Err(RareError::invalid("feature entropy needs at least two nodes"));
    }
    if n > DENSE_NODE_LIMIT {
        return Err(RareError::invalid(format!(
            "{n} nodes exceeds the dense entropy limit of {DENSE_NODE_LIMIT}"
        )));
    }
    check_finite(embeddings.view(), "embedding entries")?;
    let dots = symmetric_from_upper(n, |i, j| {
        embeddings
            .row(i)
            .iter()
            .zip(embeddings.row(j).iter())
            .map(|(a, b)| a * b)
            .sum()
    });
    check_finite(dots.view(), "embedding dot products")?;
    let max = dots.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = dots.iter().map(|g| (g - max).exp()).sum();
    let log_norm = max + sum.ln();
    let probs = dots.mapv(|g| (g - log_norm).exp());
    debug_assert!(
        (probs.sum() - 1.0).abs() <= 1e-9,
        "pair probabilities sum to {}",
        probs.sum()
    );
    Ok(probs)
}

/// `H_f(v,u) = -P(z_v,z_u) ln P(z_v,z_u)`.
pub fn feature_entropy(embeddings: &Array2<f64>) -> Result<Array2<f64>> {
    let probs = pair_probabilities(embeddings)?;
    Ok(probs.mapv(|p| if p > 0.0 { -p * p.ln() } else { 0.0 }))
}

/// Descending degree sequence of a node and its neighbours, zero-padded to
/// `M + 1` where `M` is the graph's maximum degree, and its normalisation.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeProfile {
    pub sequence: Vec<usize>,
    pub distribution: Vec<f64>,
    pub max_degree: usize,
}

/// Nonzero prefix of the normalised profile. An isolated node gets the point
/// mass `[1.0]`.
fn compact_distribution(graph: &Graph, v: usize) -> Vec<f64> {
    let mut seq: Vec<usize> = std::iter::once(graph.degree(v))
        .chain(graph.neighbors(v).iter().map(|&u| graph.degree(u)))
        .collect();
    seq.sort_unstable_by(|a, b| b.cmp(a));
    let total: usize = seq.iter().sum();
    if total == 0 {
        return vec![1.0];
    }
    seq.iter().map(|&x| x as f64 / total as f64).collect()
}

pub fn degree_profile(graph: &Graph, v: usize) -> DegreeProfile {
    let m = graph.max_degree();
    let mut sequence: Vec<usize> = std::iter::once(graph.degree(v))
        .chain(graph.neighbors(v).iter().map(|&u| graph.degree(u)))
        .collect();
    sequence.sort_unstable_by(|a, b| b.cmp(a));
    sequence.resize(m + 1, 0);
    let mut distribution = vec![0.0; m + 1];
    let compact = compact_distribution(graph, v);
    distribution[..compact.len()].copy_from_slice(&compact);
    DegreeProfile {
        sequence,
        distribution,
        max_degree: m,
    }
}

/// `1 - JS(p, q)` with base-2 logarithms; inputs are zero-padded implicitly.
pub fn js_similarity(p: &[f64], q: &[f64]) -> f64 {
    let len = p.len().max(q.len());
    let mut kl_p = 0.0;
    let mut kl_q = 0.0;
    for i in 0..len {
        let pi = p.get(i).copied().unwrap_or(0.0);
        let qi = q.get(i).copied().unwrap_or(0.0);
        let m = (pi + qi) / 2.0;
        if pi > 0.0 {
            kl_p += pi * (pi / m).log2();
        }
        if qi > 0.0 {
            kl_q += qi * (qi / m).log2();
        }
    }
    (1.0 - 0.5 * (kl_p + kl_q)).clamp(0.0, 1.0)
}

pub fn structural_entropy(graph: &Graph) -> Result<Array2<f64>> {
    let n = graph.num_nodes();
    if n > DENSE_NODE_LIMIT {
        return Err(RareError::invalid(format!(
            "{n} nodes exceeds the dense entropy limit of {DENSE_NODE_LIMIT}"
        )));
    }
    let profiles: Vec<Vec<f64>> = (0..n).map(|v| compact_distribution(graph, v)).collect();
    Ok(symmetric_from_upper(n, |i, j| {
        if i == j {
            1.0
        } else {
            js_similarity(&profiles[i], &profiles[j])
        }
    }))
}

/// The three pairwise matrices plus the mixing weight used to combine them.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyTable {
    pub feature: Array2<f64>,
    pub structural: Array2<f64>,
    pub combined: Array2<f64>,
    pub lambda: f64,
}

pub fn relative_entropy(
    feature: &Array2<f64>,
    structural: &Array2<f64>,
    lambda: f64,
) -> Result<EntropyTable> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(RareError::invalid(format!("lambda must be >= 0, got {lambda}")));
    }
    if feature.dim() != structural.dim() || feature.nrows() != feature.ncols() {
        return Err(RareError::DimensionMismatch(format!(
            "feature {:?} vs structural {:?}",
            feature.dim(),
            structural.dim()
        )));
    }
    let combined = feature + &structural.mapv(|s| lambda * s);
    Ok(EntropyTable {
        feature: feature.clone(),
        structural: structural.clone(),
        combined,
        lambda,
    })
}

const TABLE_MAGIC: &[u8; 4] = b"RARE";
const TABLE_VERSION: u32 = 1;

impl EntropyTable {
    /// Embeds the graph's features, then builds all three matrices.
    pub fn compute(graph: &Graph, embedding: &EmbeddingConfig, lambda: f64) -> Result<Self> {
        let z = embed(graph.features(), embedding)?;
        let hf = feature_entropy(&z)?;
        let hs = structural_entropy(graph)?;
        relative_entropy(&hf, &hs, lambda)
    }

    pub fn num_nodes(&self) -> usize {
        self.combined.nrows()
    }

    /// Little-endian layout: magic `RARE`, `u32` version, `u64` N, `f64`
    /// lambda, then the feature, structural and combined matrices row-major.
    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.num_nodes();
        let mut out = Vec::with_capacity(24 + 3 * n * n * 8);
        out.extend_from_slice(TABLE_MAGIC);
        out.extend_from_slice(&TABLE_VERSION.to_le_bytes());
        out.extend_from_slice(&(n as u64).to_le_bytes());
        out.extend_from_slice(&self.lambda.to_le_bytes());
        for m in [&self.feature, &self.structural, &self.combined] {
            for x in m.iter() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 24 || &bytes[..4] != TABLE_MAGIC {
            return Err(RareError::Format("missing RARE header".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != TABLE_VERSION {
            return Err(RareError::Format(format!("unsupported table version {version}")));
        }
        let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let lambda = f64::from_le_bytes(bytes[16..24].try_into().unwrap());
        let expected = n
            .checked_mul(n)
            .and_then(|nn| nn.checked_mul(24))
            .and_then(|b| b.checked_add(24))
            .ok_or_else(|| RareError::Format("table size overflow".into()))?;
        if bytes.len() != expected {
            return Err(RareError::Format(format!(
                "expected {expected} bytes for N={n}, found {}",
                bytes.len()
            )));
        }
        let mut mats = bytes[24..].chunks_exact(n * n * 8).map(|chunk| {
            let vals: Vec<f64> = chunk
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect();
            Array2::from_shape_vec((n, n), vals).expect("chunk length checked")
        });
        let (feature, structural, combined) = if n == 0 {
            (Array2::zeros((0, 0)), Array2::zeros((0, 0)), Array2::zeros((0, 0)))
        } else {
            (mats.next().unwrap(), mats.next().unwrap(), mats.next().unwrap())
        };
        Ok(EntropyTable {
            feature,
            structural,
            combined,
            lambda,
        })
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| RareError::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| RareError::io(path, e))
    }

    pub fn read_from(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| RareError::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Per-node candidate rankings: remote nodes by descending combined entropy
/// (edge addition) and one-hop neighbours by ascending combined entropy
/// (edge deletion). Ties break on ascending node id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntropySequence {
    pub add_candidates: Vec<Vec<usize>>,
    pub delete_candidates: Vec<Vec<usize>>,
}

pub fn build_sequences(table: &EntropyTable, graph: &Graph) -> Result<EntropySequence> {
    let n = graph.num_nodes();
    if table.num_nodes() != n {
        return Err(RareError::DimensionMismatch(format!(
            "entropy table has {} nodes, graph has {n}",
            table.num_nodes()
        )));
    }
    let h = &table.combined;
    let per_node: Vec<(Vec<usize>, Vec<usize>)> = (0..n)
        .into_par_iter()
        .map(|v| {
            let row = h.row(v);
            let mut add: Vec<usize> = (0..n).filter(|&u| u != v && !graph.has_edge(v, u)).collect();
            add.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
            let mut del = graph.neighbors(v).to_vec();
            del.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
            (add, del)
        })
        .collect();
    let (add_candidates, delete_candidates) = per_node.into_iter().unzip();
    Ok(EntropySequence {
        add_candidates,
        delete_candidates,
    })
}

impl EntropySequence {
    pub fn num_nodes(&self) -> usize {
        self.add_candidates.len()
    }

    /// Same candidate sets with each node's orderings randomly permuted.
    pub fn shuffled(&self, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = self.clone();
        for (add, del) in out.add_candidates.iter_mut().zip(out.delete_candidates.iter_mut()) {
            add.shuffle(&mut rng);
            del.shuffle(&mut rng);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;

    fn path3() -> Graph {
        Graph::new(Array2::zeros((3, 1)), vec![0, 0, 1], 2, [(0, 1), (1, 2)]).unwrap()
    }

    #[test]
    fn identity_and_projection_embeddings() {
        let x = array![[1.0, 2.0], [3.0, 4.0]];
        assert_eq!(embed(&x, &EmbeddingConfig::identity(2)).unwrap(), x);
        assert!(embed(&x, &EmbeddingConfig { target_dim: 3, ..EmbeddingConfig::identity(2) }).is_err());

        let wide = Array2::from_shape_fn((4, 100), |(i, j)| ((i * 7 + j) % 3) as f64);
        let cfg = EmbeddingConfig::auto(100, 9);
        assert_eq!(cfg.mode, EmbeddingMode::Projection);
        let a = embed(&wide, &cfg).unwrap();
        assert_eq!(a.dim(), (4, DEFAULT_PROJECTION_DIM));
        assert_eq!(a, embed(&wide, &cfg).unwrap());
        let zero = embed(&Array2::zeros((4, 100)), &cfg).unwrap();
        assert!(zero.iter().all(|&z| z == 0.0));
    }

    #[test]
    fn uniform_pair_probabilities() {
        let hf = feature_entropy(&Array2::zeros((2, 3))).unwrap();
        for &h in hf.iter() {
            assert_abs_diff_eq!(h, 0.25 * 4f64.ln(), epsilon = 1e-15);
        }
        assert_abs_diff_eq!(0.25 * 4f64.ln(), 0.346574, epsilon = 1e-6);
    }

    #[test]
    fn three_node_feature_entropy_against_term_by_term_evaluation() {
        let z = array![[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]];
        let hf = feature_entropy(&z).unwrap();
        // Dot products: six ordered pairs equal 1 (incl. diagonal of 1 and 3,
        // and (1,3),(3,1)), the rest 0; normaliser 5e + 4.
        let dots = [[1.0, 0.0, 1.0], [0.0, 1.0, 0.0], [1.0, 0.0, 1.0]];
        let z_sum: f64 = dots.iter().flatten().map(|g: &f64| g.exp()).sum();
        assert_abs_diff_eq!(z_sum, 5.0 * 1f64.exp() + 4.0, epsilon = 1e-12);
        for i in 0..3 {
            for j in 0..3 {
                let p = f64::exp(dots[i][j]) / z_sum;
                assert_abs_diff_eq!(hf[[i, j]], -p * p.ln(), epsilon = 1e-14);
            }
        }
        assert!(hf[[0, 2]] > hf[[0, 1]]);
        assert_eq!(hf[[0, 1]], hf[[1, 0]]);
    }

    #[test]
    fn feature_entropy_rejects_bad_input() {
        assert!(feature_entropy(&Array2::zeros((1, 2))).is_err());
        let mut z = Array2::zeros((3, 2));
        z[[1, 1]] = f64::NAN;
        assert!(matches!(feature_entropy(&z), Err(RareError::NonFinite(_))));
    }

    #[test]
    fn degree_profiles_by_hand() {
        let g = path3();
        let a = degree_profile(&g, 0);
        assert_eq!(a.sequence, vec![2, 1, 0]);
        assert_eq!(a.distribution, vec![2.0 / 3.0, 1.0 / 3.0, 0.0]);
        let b = degree_profile(&g, 1);
        assert_eq!(b.sequence, vec![2, 1, 1]);
        assert_eq!(b.distribution, vec![0.5, 0.25, 0.25]);

        let star = Graph::new(Array2::zeros((5, 1)), vec![0; 5], 2, (1..5).map(|i| (0, i))).unwrap();
        let c = degree_profile(&star, 0);
        assert_eq!(c.sequence, vec![4, 1, 1, 1, 1]);
        assert_eq!(c.distribution, vec![0.5, 0.125, 0.125, 0.125, 0.125]);
        assert!((c.distribution.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn isolated_node_profile_is_point_mass() {
        let g = Graph::new(Array2::zeros((3, 1)), vec![0, 1, 0], 2, [(0, 1)]).unwrap();
        let p = degree_profile(&g, 2);
        assert_eq!(p.sequence, vec![0, 0]);
        assert_eq!(p.distribution, vec![1.0, 0.0]);
        assert_eq!(structural_entropy(&g).unwrap()[[2, 2]], 1.0);
    }

    #[test]
    fn path_structural_entropy() {
        let hs = structural_entropy(&path3()).unwrap();
        for v in 0..3 {
            assert_eq!(hs[[v, v]], 1.0);
        }
        assert_eq!(hs[[0, 2]], 1.0);
        // Term-by-term base-2 JS between [2/3,1/3,0] and [1/2,1/4,1/4].
        let p = [2.0 / 3.0, 1.0 / 3.0, 0.0];
        let q = [0.5, 0.25, 0.25];
        let mut kl_p = 0.0f64;
        let mut kl_q = 0.0f64;
        for i in 0..3 {
            let m: f64 = (p[i] + q[i]) / 2.0;
            if p[i] > 0.0 {
                kl_p += p[i] * (p[i] / m).log2();
            }
            kl_q += q[i] * (q[i] / m).log2();
        }
        let expected = 1.0 - 0.5 * (kl_p + kl_q);
        assert_abs_diff_eq!(hs[[0, 1]], expected, epsilon = 1e-15);
        assert!(expected > 0.0 && expected < 1.0);
        assert_abs_diff_eq!(expected, 0.8620746190299698, epsilon = 1e-12);
    }

    #[test]
    fn relative_entropy_mixing() {
        let hf = array![[0.2, 0.2], [0.2, 0.2]];
        let hs = array![[1.0, 0.5], [0.5, 1.0]];
        let t = relative_entropy(&hf, &hs, 1.0).unwrap();
        assert_abs_diff_eq!(t.combined[[0, 1]], 0.7, epsilon = 1e-15);
        let t0 = relative_entropy(&hf, &hs, 0.0).unwrap();
        assert_eq!(t0.combined, hf);
        assert!(relative_entropy(&hf, &hs, -1.0).is_err());
        assert!(relative_entropy(&hf, &Array2::zeros((3, 3)), 1.0).is_err());
    }

    #[test]
    fn sequences_on_small_cases() {
        let complete = Graph::new(
            Array2::zeros((4, 1)),
            vec![0, 1, 0, 1],
            2,
            [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)],
        )
        .unwrap();
        let t = EntropyTable::compute(&complete, &EmbeddingConfig::identity(1), 1.0).unwrap();
        let s = build_sequences(&t, &complete).unwrap();
        assert!(s.add_candidates.iter().all(|a| a.is_empty()));

        let g = Graph::new(Array2::zeros((8, 1)), vec![0; 8], 2, [(0, 3), (0, 7)]).unwrap();
        let mut combined = Array2::from_elem((8, 8), 0.5);
        combined[[0, 3]] = 0.1;
        combined[[3, 0]] = 0.1;
        combined[[0, 7]] = 0.9;
        combined[[7, 0]] = 0.9;
        let table = EntropyTable {
            feature: combined.clone(),
            structural: Array2::zeros((8, 8)),
            combined,
            lambda: 0.0,
        };
        let s = build_sequences(&table, &g).unwrap();
        assert_eq!(s.delete_candidates[0], vec![3, 7]);
        assert_eq!(s.add_candidates[0], vec![1, 2, 4, 5, 6]);
    }

    #[test]
    fn table_binary_layout() {
        let g = path3();
        let t = EntropyTable::compute(&g, &EmbeddingConfig::identity(1), 0.5).unwrap();
        let bytes = t.to_bytes();
        assert_eq!(&bytes[..4], b"RARE");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 3);
        assert_eq!(f64::from_le_bytes(bytes[16..24].try_into().unwrap()), 0.5);
        assert_eq!(bytes.len(), 24 + 3 * 9 * 8);
        assert_eq!(EntropyTable::from_bytes(&bytes).unwrap(), t);
        assert!(EntropyTable::from_bytes(&bytes[..30]).is_err());
    }

    fn arb_graph(max_n: usize) -> impl Strategy<Value = Graph> {
        (2usize..max_n).prop_flat_map(|n| {
            proptest::collection::vec((0..n, 0..n), 0..3 * n).prop_map(move |edges| {
                Graph::new(Array2::zeros((n, 1)), vec![0; n], 2, edges).unwrap()
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn structural_entropy_bounds(g in arb_graph(16)) {
            let hs = structural_entropy(&g).unwrap();
            let n = g.num_nodes();
            for i in 0..n {
                prop_assert_eq!(hs[[i, i]], 1.0);
                for j in 0..n {
                    prop_assert!((0.0..=1.0).contains(&hs[[i, j]]));
                    prop_assert!((hs[[i, j]] - hs[[j, i]]).abs() <= 1e-12);
                }
            }
        }

        #[test]
        fn larger_dot_product_means_larger_feature_entropy(
            n in 3usize..8,
            vals in proptest::collection::vec(-2.0f64..2.0, 8 * 4),
        ) {
            let z = Array2::from_shape_vec((n, 4), vals[..n * 4].to_vec()).unwrap();
            let p = pair_probabilities(&z).unwrap();
            prop_assert!((p.sum() - 1.0).abs() <= 1e-9);
            let hf = feature_entropy(&z).unwrap();
            let dots = z.dot(&z.t());
            let cut = (-1.0f64).exp();
            for a in 0..n * n {
                for b in 0..n * n {
                    let (ia, ja, ib, jb) = (a / n, a % n, b / n, b % n);
                    if p[[ia, ja]] < cut && p[[ib, jb]] < cut && dots[[ia, ja]] > dots[[ib, jb]] + 1e-12 {
                        prop_assert!(hf[[ia, ja]] > hf[[ib, jb]]);
                    }
                }
            }
        }
    }
}
