//! Seeded graph generators.
//!
//! [`webkb_like`] produces small, heterophilic, bag-of-words graphs shaped
//! after the WebKB university page collections. They are stand-ins used when
//! the real datasets are not on disk and make no claim to reproduce them.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::graph::Graph;

#[derive(Debug, Clone, PartialEq)]
pub struct WebKbProfile {
    pub name: &'static str,
    pub class_sizes: Vec<usize>,
    pub edges: usize,
    pub features: usize,
    pub homophily: f64,
}

impl WebKbProfile {
    pub fn cornell() -> Self {
        Self { name: "cornell", class_sizes: vec![33, 1, 18, 101, 30], edges: 295, features: 1703, homophily: 0.30 }
    }

    pub fn texas() -> Self {
        Self { name: "texas", class_sizes: vec![33, 1, 30, 101, 18], edges: 309, features: 1703, homophily: 0.11 }
    }

    pub fn wisconsin() -> Self {
        Self { name: "wisconsin", class_sizes: vec![10, 70, 118, 32, 21], edges: 499, features: 1703, homophily: 0.21 }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "cornell" => Some(Self::cornell()),
            "texas" => Some(Self::texas()),
            "wisconsin" => Some(Self::wisconsin()),
            _ => None,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.class_sizes.iter().sum()
    }
}

/// Words drawn per page and the share of them taken from the page's class
/// vocabulary; the remainder is uniform background.
const WORDS_PER_NODE: usize = 32;
const TOPIC_WORDS: usize = 60;
const TOPIC_SHARE: f64 = 0.18;
const CLASS_NAMES: [&str; 5] = ["course", "faculty", "student", "project", "staff"];

/// Generates a graph with the profile's class sizes, exact edge count and
/// homophily `round(h * |E|) / |E|`. Degrees are heavy-tailed.
pub fn webkb_like(profile: &WebKbProfile, seed: u64) -> Result<Graph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = profile.num_nodes();
    let c = profile.class_sizes.len();
    let dim = profile.features;

    let mut labels: Vec<usize> = profile
        .class_sizes
        .iter()
        .enumerate()
        .flat_map(|(k, &s)| std::iter::repeat_n(k, s))
        .collect();
    labels.shuffle(&mut rng);

    let mut vocab: Vec<usize> = (0..dim).collect();
    vocab.shuffle(&mut rng);
    let topics: Vec<&[usize]> = (0..c).map(|k| &vocab[k * TOPIC_WORDS..(k + 1) * TOPIC_WORDS]).collect();
    let mut x = Array2::zeros((n, dim));
    for v in 0..n {
        for _ in 0..WORDS_PER_NODE {
            let w = if rng.random::<f64>() < TOPIC_SHARE {
                topics[labels[v]][rng.random_range(0..TOPIC_WORDS)]
            } else {
                rng.random_range(0..dim)
            };
            x[[v, w]] = 1.0;
        }
    }

    // Pareto-like activity weights give a few hub pages.
    let weight: Vec<f64> = (0..n).map(|_| rng.random::<f64>().max(1e-3).powf(-0.7)).collect();
    let members: Vec<Vec<usize>> = (0..c).map(|k| (0..n).filter(|&v| labels[v] == k).collect()).collect();
    let pick = |pool: &[usize], rng: &mut ChaCha8Rng| -> usize {
        let total: f64 = pool.iter().map(|&v| weight[v]).sum();
        let mut r = rng.random::<f64>() * total;
        for &v in pool {
            r -= weight[v];
            if r <= 0.0 {
                return v;
            }
        }
        *pool.last().unwrap()
    };
    let all: Vec<usize> = (0..n).collect();
    let same_target = (profile.homophily * profile.edges as f64).round() as usize;
    let mut edges = std::collections::BTreeSet::new();
    let mut same = 0;
    while edges.len() < profile.edges {
        let want_same = same < same_target;
        let u = pick(&all, &mut rng);
        let v = if want_same {
            if members[labels[u]].len() < 2 {
                continue;
            }
            pick(&members[labels[u]], &mut rng)
        } else {
            pick(&all, &mut rng)
        };
        if u == v || (labels[u] == labels[v]) != want_same {
            continue;
        }
        if edges.insert((u.min(v), u.max(v))) && want_same {
            same += 1;
        }
    }

    let ids = (0..n).map(|v| format!("{}-{v}", profile.name)).collect();
    let names = (0..c).map(|k| CLASS_NAMES.get(k).map_or_else(|| format!("class{k}"), |s| s.to_string())).collect();
    Graph::new(x, labels, c, edges)?.with_node_ids(ids)?.with_class_names(names)
}

/// G(n, p) with standard-normal features and uniformly random labels.
pub fn erdos_renyi(n: usize, p: f64, dim: usize, classes: usize, seed: u64) -> Result<Graph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_simple_fn((n, dim), || StandardNormal.sample(&mut rng));
    let labels = (0..n).map(|_| rng.random_range(0..classes)).collect();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    Graph::new(x, labels, classes, edges)
}

/// Complete graph on four nodes, two per class, with features that make
/// each node's cross-class neighbours its least similar ones.
pub fn two_class_k4() -> Result<Graph> {
    let x = ndarray::array![[1.0, 0.0], [0.9, 0.1], [0.1, 0.9], [0.0, 1.0]];
    let edges = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
    Graph::new(x, vec![0, 0, 1, 1], 2, edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::homophily_ratio;

    #[test]
    fn webkb_profiles_have_requested_shape() {
        for p in [WebKbProfile::cornell(), WebKbProfile::texas(), WebKbProfile::wisconsin()] {
            let g = webkb_like(&p, 7).unwrap();
            assert_eq!(g.num_nodes(), p.num_nodes());
            assert_eq!(g.num_edges(), p.edges);
            assert_eq!(g.num_features(), 1703);
            assert_eq!(g.num_classes(), 5);
            let h = homophily_ratio(&g).unwrap();
            assert!((h - p.homophily).abs() < 0.5 / p.edges as f64 + 1e-12, "{} {h}", p.name);
        }
    }

    #[test]
    fn generators_are_seeded() {
        let a = webkb_like(&WebKbProfile::cornell(), 3).unwrap();
        let b = webkb_like(&WebKbProfile::cornell(), 3).unwrap();
        assert_eq!(a.edges(), b.edges());
        assert_eq!(a.features(), b.features());
        assert_eq!(erdos_renyi(10, 0.3, 3, 2, 1).unwrap().edges(), erdos_renyi(10, 0.3, 3, 2, 1).unwrap().edges());
    }
}
