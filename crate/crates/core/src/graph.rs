//! Graph representation, dataset ingestion, stratified splits and homophily.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{RareError, Result};

/// Counters collected while building a graph from raw edge records.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EdgeStats {
    /// Number of edge records seen (lines in an edge file, or pairs passed in).
    pub records: usize,
    /// Self-loop records that were dropped.
    pub self_loops_dropped: usize,
    /// Records collapsed because the unordered pair was already present.
    pub duplicates_collapsed: usize,
}

/// An undirected, attributed graph.
///
/// Features, labels and identifiers are reference counted so rewired copies
/// produced by [`Graph::with_edges`] share them with the original.
#[derive(Debug, Clone)]
pub struct Graph {
    features: Arc<Array2<f64>>,
    labels: Arc<Vec<usize>>,
    num_classes: usize,
    node_ids: Arc<Vec<String>>,
    class_names: Arc<Vec<String>>,
    /// Canonical `(u, v)` pairs with `u < v`, sorted.
    edges: Vec<(usize, usize)>,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    stats: EdgeStats,
}

impl Graph {
    /// Builds a graph from in-memory parts. Self-loops are dropped and
    /// duplicate or reversed pairs collapsed; both are counted in
    /// [`Graph::edge_stats`].
    pub fn new(
        features: Array2<f64>,
        labels: Vec<usize>,
        num_classes: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let n = labels.len();
        if features.nrows() != n {
            return Err(RareError::DimensionMismatch(format!(
                "feature matrix has {} rows but there are {} labels",
                features.nrows(),
                n
            )));
        }
        if num_classes < 2 {
            return Err(RareError::invalid("a graph needs at least two classes"));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(RareError::invalid(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        let node_ids = (0..n).map(|i| i.to_string()).collect();
        let class_names = (0..num_classes).map(|c| c.to_string()).collect();
        let mut g = Graph {
            features: Arc::new(features),
            labels: Arc::new(labels),
            num_classes,
            node_ids: Arc::new(node_ids),
            class_names: Arc::new(class_names),
            edges: Vec::new(),
            offsets: vec![0; n + 1],
            neighbors: Vec::new(),
            stats: EdgeStats::default(),
        };
        g.set_edges(edges)?;
        Ok(g)
    }

    /// Replaces the node identifiers used by export.
    pub fn with_node_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.num_nodes() {
            return Err(RareError::DimensionMismatch(format!(
                "{} node ids for {} nodes",
                ids.len(),
                self.num_nodes()
            )));
        }
        self.node_ids = Arc::new(ids);
        Ok(self)
    }

    pub fn with_class_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.num_classes {
            return Err(RareError::DimensionMismatch(format!(
                "{} class names for {} classes",
                names.len(),
                self.num_classes
            )));
        }
        self.class_names = Arc::new(names);
        Ok(self)
    }

    /// A graph over the same nodes, features and labels with a new edge set.
    pub fn with_edges(&self, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut g = Graph {
            features: Arc::clone(&self.features),
            labels: Arc::clone(&self.labels),
            num_classes: self.num_classes,
            node_ids: Arc::clone(&self.node_ids),
            class_names: Arc::clone(&self.class_names),
            edges: Vec::new(),
            offsets: Vec::new(),
            neighbors: Vec::new(),
            stats: EdgeStats::default(),
        };
        g.set_edges(edges)?;
        Ok(g)
    }

    /// Relabels nodes so that old node `v` becomes `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.num_nodes();
        if perm.len() != n {
            return Err(RareError::DimensionMismatch("permutation length".into()));
        }
        let mut seen = vec![false; n];
        for &p in perm {
            if p >= n || std::mem::replace(&mut seen[p], true) {
                return Err(RareError::invalid("not a permutation"));
            }
        }
        let d = self.num_features();
        let mut features = Array2::zeros((n, d));
        let mut labels = vec![0; n];
        let mut ids = vec![String::new(); n];
        for v in 0..n {
            features.row_mut(perm[v]).assign(&self.features.row(v));
            labels[perm[v]] = self.labels[v];
            ids[perm[v]] = self.node_ids[v].clone();
        }
        let edges = self.edges.iter().map(|&(u, v)| (perm[u], perm[v]));
        Graph::new(features, labels, self.num_classes, edges)?
            .with_node_ids(ids)?
            .with_class_names(self.class_names.to_vec())
    }

    fn set_edges(&mut self, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<()> {
        let n = self.num_nodes();
        let mut stats = EdgeStats::default();
        let mut canon = Vec::new();
        for (u, v) in edges {
            stats.records += 1;
            if u >= n || v >= n {
                return Err(RareError::invalid(format!(
                    "edge ({u}, {v}) references a node outside 0..{n}"
                )));
            }
            if u == v {
                stats.self_loops_dropped += 1;
                continue;
            }
            canon.push((u.min(v), u.max(v)));
        }
        canon.sort_unstable();
        let before = canon.len();
        canon.dedup();
        stats.duplicates_collapsed = before - canon.len();

        let mut degree = vec![0usize; n];
        for &(u, v) in &canon {
            degree[u] += 1;
            degree[v] += 1;
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets[..n].to_vec();
        let mut neighbors = vec![0; offsets[n]];
        for &(u, v) in &canon {
            neighbors[fill[u]] = v;
            fill[u] += 1;
        }
        for &(u, v) in &canon {
            neighbors[fill[v]] = u;
            fill[v] += 1;
        }
        for v in 0..n {
            neighbors[offsets[v]..offsets[v + 1]].sort_unstable();
        }
        self.edges = canon;
        self.offsets = offsets;
        self.neighbors = neighbors;
        self.stats = stats;
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.labels.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    /// Unordered edges as `(u, v)` with `u < v`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Sorted one-hop neighbours of `v`.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.num_nodes()).map(|v| self.degree(v)).collect()
    }

    pub fn max_degree(&self) -> usize {
        (0..self.num_nodes()).map(|v| self.degree(v)).max().unwrap_or(0)
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    /// CSR row offsets (length `N + 1`) and concatenated neighbour lists.
    pub fn csr(&self) -> (&[usize], &[usize]) {
        (&self.offsets, &self.neighbors)
    }

    pub fn edge_stats(&self) -> EdgeStats {
        self.stats
    }
}

fn tokens(line: &str) -> impl Iterator<Item = &str> {
    line.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| RareError::io(path, e))
}

/// Loads a graph from a content file (`id f_1 .. f_d label` per line) and an
/// edge file (`u v` per line, `#` comments).
///
/// Node ids are remapped to `0..N` in first-appearance order. Label tokens are
/// mapped to dense class ids in lexicographic order. Edges are symmetrised,
/// duplicates collapsed and self-loops dropped; see [`Graph::edge_stats`].
/// Commas are accepted as feature separators and a leading header line in
/// either file is skipped.
pub fn load_graph(content_path: &Path, edges_path: &Path) -> Result<Graph> {
    let content = read_to_string(content_path)?;
    let edge_text = read_to_string(edges_path)?;

    let parse_err = |path: &Path, line: usize, message: String| RareError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut ids: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut label_tokens: Vec<String> = Vec::new();
    let mut arity: Option<usize> = None;
    let mut first_record = true;

    for (lineno, line) in content.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = tokens(trimmed).collect();
        let is_first = std::mem::replace(&mut first_record, false);
        if toks.len() < 2 {
            return Err(parse_err(
                content_path,
                lineno + 1,
                "expected a node id and a label".into(),
            ));
        }
        let feats: std::result::Result<Vec<f64>, _> =
            toks[1..toks.len() - 1].iter().map(|t| t.parse::<f64>()).collect();
        let feats = match feats {
            Ok(f) => f,
            Err(_) if is_first => continue,
            Err(e) => return Err(parse_err(content_path, lineno + 1, e.to_string())),
        };
        match arity {
            None => arity = Some(feats.len()),
            Some(a) if a != feats.len() => {
                return Err(parse_err(
                    content_path,
                    lineno + 1,
                    format!("expected {a} feature values, found {}", feats.len()),
                ))
            }
            _ => {}
        }
        let id = toks[0].to_string();
        if index.insert(id.clone(), ids.len()).is_some() {
            return Err(parse_err(content_path, lineno + 1, format!("duplicate node id {id}")));
        }
        ids.push(id);
        rows.push(feats);
        label_tokens.push(toks[toks.len() - 1].to_string());
    }
    if ids.is_empty() {
        return Err(RareError::invalid(format!(
            "{} contains no node records",
            content_path.display()
        )));
    }

    let classes: Vec<String> = label_tokens
        .iter()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let class_index: HashMap<&str, usize> =
        classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let labels: Vec<usize> = label_tokens.iter().map(|t| class_index[t.as_str()]).collect();
    let mut class_names = classes.clone();
    while class_names.len() < 2 {
        class_names.push(format!("<unused-{}>", class_names.len()));
    }

    let d = arity.unwrap_or(0);
    let n = ids.len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let features = Array2::from_shape_vec((n, d), flat)
        .map_err(|e| RareError::invalid(e.to_string()))?;

    let mut edges = Vec::new();
    let mut first_edge = true;
    for (lineno, line) in edge_text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = tokens(trimmed).collect();
        let is_first = std::mem::replace(&mut first_edge, false);
        if toks.len() < 2 {
            return Err(parse_err(edges_path, lineno + 1, "expected `u v`".into()));
        }
        match (index.get(toks[0]), index.get(toks[1])) {
            (Some(&u), Some(&v)) => edges.push((u, v)),
            (None, None) if is_first => continue,
            (a, _) => {
                let unknown = if a.is_none() { toks[0] } else { toks[1] };
                return Err(parse_err(
                    edges_path,
                    lineno + 1,
                    format!("edge references unknown node id {unknown}"),
                ));
            }
        }
    }

    let g = Graph::new(features, labels, class_names.len(), edges)?
        .with_node_ids(ids)?
        .with_class_names(class_names)?;
    if g.stats.self_loops_dropped > 0 {
        log::warn!(
            "{}: dropped {} self-loop line(s)",
            edges_path.display(),
            g.stats.self_loops_dropped
        );
    }
    Ok(g)
}

/// Locates the content and edge files inside a dataset directory.
///
/// Accepted names: `content`, `*.content`, `*node_feature_label*` for nodes
/// and `edges`, `*.edges`, `*.cites`, `*graph_edges*` for edges.
pub fn dataset_files(dir: &Path) -> Result<(PathBuf, PathBuf)> {
    let entries = fs::read_dir(dir).map_err(|e| RareError::io(dir, e))?;
    let mut names: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    names.sort();
    let pick = |pred: &dyn Fn(&str) -> bool, what: &str| -> Result<PathBuf> {
        names
            .iter()
            .find(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(pred))
            .cloned()
            .ok_or_else(|| RareError::MissingFile(dir.join(what)))
    };
    let content = pick(
        &|n| n == "content" || n.ends_with(".content") || n.contains("node_feature_label"),
        "content",
    )?;
    let edges = pick(
        &|n| {
            n == "edges" || n.ends_with(".edges") || n.ends_with(".cites") || n.contains("graph_edges")
        },
        "edges",
    )?;
    Ok((content, edges))
}

pub fn load_dataset_dir(dir: &Path) -> Result<Graph> {
    let (content, edges) = dataset_files(dir)?;
    load_graph(&content, &edges)
}

/// Fraction of edges whose endpoints share a label.
pub fn homophily_ratio(graph: &Graph) -> Result<f64> {
    homophily_of_edges(graph.labels(), graph.edges())
}

pub fn homophily_of_edges(labels: &[usize], edges: &[(usize, usize)]) -> Result<f64> {
    if edges.is_empty() {
        return Err(RareError::invalid("homophily ratio of a graph without edges"));
    }
    let same = edges.iter().filter(|&&(u, v)| labels[u] == labels[v]).count();
    Ok(same as f64 / edges.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.6,
            val: 0.2,
            test: 0.2,
        }
    }
}

impl SplitFractions {
    /// Per-class partition sizes: `round(train·n)`, `round(val·n)` and the rest.
    pub fn partition(&self, n: usize) -> (usize, usize, usize) {
        let train = ((self.train * n as f64).round() as usize).min(n);
        let val = ((self.val * n as f64).round() as usize).min(n - train);
        (train, val, n - train - val)
    }

    fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|f| !f.is_finite() || *f < 0.0)
            || ((self.train + self.val + self.test) - 1.0).abs() > 1e-9
        {
            return Err(RareError::invalid(format!(
                "split fractions must be nonnegative and sum to 1, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// What to do with a class too small to populate all three partitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SmallClassPolicy {
    #[default]
    Reject,
    /// Put every member of the class in the training partition.
    AllToTrain,
}

/// Disjoint train/validation/test node masks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitMask {
    pub train: Vec<bool>,
    pub val: Vec<bool>,
    pub test: Vec<bool>,
    pub seed: u64,
}

impl SplitMask {
    pub fn train_indices(&self) -> Vec<usize> {
        indices(&self.train)
    }

    pub fn val_indices(&self) -> Vec<usize> {
        indices(&self.val)
    }

    pub fn test_indices(&self) -> Vec<usize> {
        indices(&self.test)
    }
}

fn indices(mask: &[bool]) -> Vec<usize> {
    mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect()
}

/// Per-class seeded shuffle followed by proportional assignment.
pub fn stratified_split(graph: &Graph, seed: u64, fractions: SplitFractions) -> Result<SplitMask> {
    stratified_split_with(graph, seed, fractions, SmallClassPolicy::Reject)
}

pub fn stratified_split_with(
    graph: &Graph,
    seed: u64,
    fractions: SplitFractions,
    policy: SmallClassPolicy,
) -> Result<SplitMask> {
    fractions.validate()?;
    let n = graph.num_nodes();
    let mut members = vec![Vec::new(); graph.num_classes()];
    for (v, &y) in graph.labels().iter().enumerate() {
        members[y].push(v);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mask = SplitMask {
        train: vec![false; n],
        val: vec![false; n],
        test: vec![false; n],
        seed,
    };
    for (class, nodes) in members.iter_mut().enumerate() {
        if nodes.is_empty() {
            continue;
        }
        nodes.shuffle(&mut rng);
        let (tr, va, te) = fractions.partition(nodes.len());
        if tr == 0 || va == 0 || te == 0 {
            match policy {
                SmallClassPolicy::Reject => {
                    return Err(RareError::invalid(format!(
                        "class {class} has {} member(s), too few for a {}/{}/{} split",
                        nodes.len(),
                        fractions.train,
                        fractions.val,
                        fractions.test
                    )))
                }
                SmallClassPolicy::AllToTrain => {
                    for &v in nodes.iter() {
                        mask.train[v] = true;
                    }
                    continue;
                }
            }
        }
        for (i, &v) in nodes.iter().enumerate() {
            if i < tr {
                mask.train[v] = true;
            } else if i < tr + va {
                mask.val[v] = true;
            } else {
                mask.test[v] = true;
            }
        }
    }
    Ok(mask)
}

/// Writes one `u v` line per edge using node identifiers, ordered by `(u, v)`
/// node index with `u < v`.
pub fn export_edgelist(graph: &Graph, path: &Path) -> Result<()> {
    write_edgelist(graph.node_ids(), graph.edges(), path)
}

pub fn write_edgelist(node_ids: &[String], edges: &[(usize, usize)], path: &Path) -> Result<()> {
    let mut canon: Vec<(usize, usize)> = edges.iter().map(|&(u, v)| (u.min(v), u.max(v))).collect();
    canon.sort_unstable();
    canon.dedup();
    let mut out = String::with_capacity(canon.len() * 8);
    for (u, v) in canon {
        let _ = writeln!(out, "{} {}", node_ids[u], node_ids[v]);
    }
    fs::write(path, out).map_err(|e| RareError::io(path, e))
}

/// Writes the content file counterpart of [`load_graph`].
pub fn write_content(graph: &Graph, path: &Path) -> Result<()> {
    let mut out = String::new();
    for v in 0..graph.num_nodes() {
        out.push_str(&graph.node_ids()[v]);
        for x in graph.features().row(v) {
            let _ = write!(out, " {x}");
        }
        let _ = writeln!(out, " {}", graph.class_names()[graph.labels()[v]]);
    }
    fs::write(path, out).map_err(|e| RareError::io(path, e))
}
