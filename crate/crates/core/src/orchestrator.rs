//! Joint training of the classifier and the rewiring agent.
//!
//! For every split seed the loop evaluates the classifier on the current
//! graph, refines it only when training accuracy sets a new maximum, rewards
//! the agent with the change in training metrics, and rebuilds the graph from
//! the agent's next state. Test accuracy is read at the iteration with the
//! best validation accuracy.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::entropy::{build_sequences, EmbeddingConfig, EntropySequence, EntropyTable};
use crate::error::{RareError, Result};
use crate::gnn::{metrics_from_logits, predict, train_epochs, AdamState, Backbone, GcnModel, GnnConfig, GraphInput, TrainMetrics};
use crate::graph::{homophily_of_edges, load_dataset_dir, stratified_split_with, write_edgelist, Graph, SmallClassPolicy, SplitFractions};
use crate::rl::{reward, rewired_edges, Agent, PolicyNet, PpoConfig, RewardParams, RewireState, StateBounds};

const MODEL_STREAM: u64 = 0x6d6f_6465_6c00_0000;
const AGENT_STREAM: u64 = 0x6167_656e_7400_0000;
const STATE_STREAM: u64 = 0x7374_6174_6500_0000;
const SHUFFLE_STREAM: u64 = 0x7368_7566_6600_0000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum Mode {
    Rare,
    FixedK { k: usize, d: usize },
    RandomK { range: usize },
    Shuffled,
    AddOnly,
    RemoveOnly,
    AucReward,
}

impl Mode {
    pub fn tag(&self) -> &'static str {
        match self {
            Mode::Rare => "rare",
            Mode::FixedK { .. } => "fixed-k",
            Mode::RandomK { .. } => "random-k",
            Mode::Shuffled => "shuffled",
            Mode::AddOnly => "add-only",
            Mode::RemoveOnly => "remove-only",
            Mode::AucReward => "auc-reward",
        }
    }

    fn uses_agent(&self) -> bool {
        !matches!(self, Mode::FixedK { .. } | Mode::RandomK { .. })
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::FixedK { k, d } => write!(f, "fixed-k(k={k},d={d})"),
            Mode::RandomK { range } => write!(f, "random-k(range={range})"),
            m => f.write_str(m.tag()),
        }
    }
}

/// Parses the parameter-free tags. `fixed-k` and `random-k` need their
/// parameters and are built directly.
impl FromStr for Mode {
    type Err = RareError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rare" => Ok(Mode::Rare),
            "shuffled" | "shuffled-sequence" => Ok(Mode::Shuffled),
            "add-only" => Ok(Mode::AddOnly),
            "remove-only" => Ok(Mode::RemoveOnly),
            "auc-reward" => Ok(Mode::AucReward),
            "fixed-k" | "random-k" => Err(RareError::invalid(format!("mode {s} needs explicit parameters"))),
            other => Err(RareError::invalid(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Dataset directory; only read by [`run`].
    pub dataset: Option<PathBuf>,
    pub lambda: f64,
    pub lambda_r: f64,
    pub seeds: Vec<u64>,
    pub ppo: PpoConfig,
    pub gnn: GnnConfig,
    pub iterations: usize,
    pub mode: Mode,
    /// Seed of the random projection used for wide feature matrices.
    pub embedding_seed: u64,
    pub fractions: SplitFractions,
    pub small_classes: SmallClassPolicy,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            lambda: 1.0,
            lambda_r: 1.0,
            seeds: (0..10).collect(),
            ppo: PpoConfig::default(),
            gnn: GnnConfig::default(),
            iterations: 500,
            mode: Mode::Rare,
            embedding_seed: 0,
            fractions: SplitFractions::default(),
            small_classes: SmallClassPolicy::AllToTrain,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(RareError::invalid("lambda must be finite and nonnegative"));
        }
        if !(self.lambda_r >= 0.0 && self.lambda_r.is_finite()) {
            return Err(RareError::invalid("lambda_r must be finite and nonnegative"));
        }
        if self.seeds.is_empty() {
            return Err(RareError::invalid("at least one split seed is required"));
        }
        if self.iterations == 0 {
            return Err(RareError::invalid("iteration budget must be positive"));
        }
        if self.gnn.epochs == 0 || self.gnn.hidden == 0 || !(0.0..1.0).contains(&self.gnn.dropout) {
            return Err(RareError::invalid("GNN needs epochs >= 1, hidden >= 1 and dropout in [0, 1)"));
        }
        self.ppo.validate()
    }
}

/// One row of `metrics.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub split: usize,
    pub train_acc: f64,
    pub val_acc: f64,
    pub test_acc: f64,
    pub loss: f64,
    pub homophily: f64,
    pub mean_reward: f64,
    pub mean_k: f64,
    pub mean_d: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub seed: u64,
    pub series: Vec<IterationRecord>,
    /// Training accuracy before any refinement, per iteration.
    pub gate_acc: Vec<f64>,
    /// Iterations at which the classifier was trained.
    pub trained_at: Vec<usize>,
    pub best_iteration: usize,
    pub best_val_acc: f64,
    pub test_acc: f64,
    pub homophily_original: f64,
    pub homophily_best: f64,
    pub best_state: RewireState,
    pub best_edges: Vec<(usize, usize)>,
    pub ppo_updates: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub dataset: String,
    pub mode: Mode,
    pub backbone: Backbone,
    pub node_ids: Vec<String>,
    pub labels: Vec<usize>,
    pub original_edges: usize,
    pub splits: Vec<SplitReport>,
    pub wall_seconds: f64,
}

impl RunReport {
    pub fn test_accuracies(&self) -> Vec<f64> {
        self.splits.iter().map(|s| s.test_acc).collect()
    }

    pub fn mean_test_acc(&self) -> f64 {
        mean_std(&self.test_accuracies()).0
    }

    pub fn std_test_acc(&self) -> f64 {
        mean_std(&self.test_accuracies()).1
    }

    /// Index of the split whose best validation accuracy is highest; the
    /// first such split on ties.
    pub fn best_split(&self) -> usize {
        let mut best = 0;
        for (i, s) in self.splits.iter().enumerate() {
            if s.best_val_acc > self.splits[best].best_val_acc {
                best = i;
            }
        }
        best
    }

    pub fn records(&self) -> impl Iterator<Item = &IterationRecord> {
        self.splits.iter().flat_map(|s| &s.series)
    }
}

/// Population mean and standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Homophily with an edgeless graph scored as 0.
pub fn homophily_or_zero(labels: &[usize], edges: &[(usize, usize)]) -> f64 {
    if edges.is_empty() {
        0.0
    } else {
        homophily_of_edges(labels, edges).unwrap_or(0.0)
    }
}

/// Macro one-vs-rest ROC AUC of softmax scores over the masked rows. Classes
/// without both positives and negatives in the mask are skipped; tied scores
/// count one half.
pub fn macro_auc(logits: &Array2<f64>, labels: &[usize], mask: &[bool]) -> f64 {
    let rows: Vec<usize> = (0..labels.len()).filter(|&v| mask[v]).collect();
    let classes = logits.ncols();
    let probs: Vec<Vec<f64>> = rows
        .iter()
        .map(|&v| {
            let row = logits.row(v);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|z| (z - max).exp()).collect();
            let total: f64 = exps.iter().sum();
            exps.into_iter().map(|e| e / total).collect()
        })
        .collect();
    let mut sum = 0.0;
    let mut used = 0;
    for c in 0..classes {
        let mut scored: Vec<(f64, bool)> = rows.iter().zip(&probs).map(|(&v, p)| (p[c], labels[v] == c)).collect();
        let pos = scored.iter().filter(|s| s.1).count();
        let neg = scored.len() - pos;
        if pos == 0 || neg == 0 {
            continue;
        }
        scored.sort_by(|a, b| a.0.total_cmp(&b.0));
        // Mann-Whitney U with midranks.
        let mut rank_sum = 0.0;
        let mut i = 0;
        while i < scored.len() {
            let mut j = i;
            while j + 1 < scored.len() && scored[j + 1].0 == scored[i].0 {
                j += 1;
            }
            let midrank = (i + j) as f64 / 2.0 + 1.0;
            rank_sum += midrank * scored[i..=j].iter().filter(|s| s.1).count() as f64;
            i = j + 1;
        }
        let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
        sum += u / (pos * neg) as f64;
        used += 1;
    }
    if used == 0 {
        0.5
    } else {
        sum / used as f64
    }
}

/// Loads the dataset named in the config, computes the entropy table and
/// runs every split.
pub fn run(config: &RunConfig) -> Result<RunReport> {
    let dir = config
        .dataset
        .as_deref()
        .ok_or_else(|| RareError::invalid("run configuration has no dataset path"))?;
    let graph = load_dataset_dir(dir)?;
    let embedding = EmbeddingConfig::auto(graph.num_features(), config.embedding_seed);
    let table = EntropyTable::compute(&graph, &embedding, config.lambda)?;
    let name = dir.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    run_on(&graph, &table, config, &name)
}

/// The backbone trained on the unmodified graph with the same splits and
/// budgets: a run in `fixed-k` mode with `k = d = 0`.
pub fn baseline(config: &RunConfig) -> Result<RunReport> {
    run(&RunConfig { mode: Mode::FixedK { k: 0, d: 0 }, ..config.clone() })
}

pub fn baseline_on(graph: &Graph, table: &EntropyTable, config: &RunConfig, dataset: &str) -> Result<RunReport> {
    run_on(graph, table, &RunConfig { mode: Mode::FixedK { k: 0, d: 0 }, ..config.clone() }, dataset)
}

pub fn run_on(graph: &Graph, table: &EntropyTable, config: &RunConfig, dataset: &str) -> Result<RunReport> {
    config.validate()?;
    if table.num_nodes() != graph.num_nodes() {
        return Err(RareError::DimensionMismatch(format!(
            "entropy table covers {} nodes, graph has {}",
            table.num_nodes(),
            graph.num_nodes()
        )));
    }
    let start = Instant::now();
    let sequences = build_sequences(table, graph)?;
    let splits = config
        .seeds
        .par_iter()
        .enumerate()
        .map(|(i, &seed)| run_split(graph, &sequences, config, i, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(RunReport {
        dataset: dataset.to_string(),
        mode: config.mode,
        backbone: config.gnn.backbone,
        node_ids: graph.node_ids().to_vec(),
        labels: graph.labels().to_vec(),
        original_edges: graph.num_edges(),
        splits,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

fn initial_state(mode: Mode, bounds: &StateBounds, sequences: &EntropySequence, graph: &Graph, seed: u64) -> RewireState {
    let n = graph.num_nodes();
    match mode {
        Mode::FixedK { k, d } => RewireState {
            k: (0..n).map(|v| k.min(sequences.add_candidates[v].len())).collect(),
            d: (0..n).map(|v| d.min(graph.degree(v))).collect(),
            step: 0,
        },
        Mode::RandomK { range } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ STATE_STREAM);
            let k = (0..n)
                .map(|v| rng.random_range(0..=range).min(sequences.add_candidates[v].len()))
                .collect();
            let d = (0..n).map(|v| rng.random_range(0..=range).min(graph.degree(v))).collect();
            RewireState { k, d, step: 0 }
        }
        _ => RewireState::zeros(bounds.num_nodes()),
    }
}

struct Evaluation {
    train: TrainMetrics,
    val: TrainMetrics,
    test: TrainMetrics,
    auc: f64,
}

fn evaluate_all(model: &GcnModel, input: &GraphInput, graph: &Graph, split: &crate::graph::SplitMask) -> Result<Evaluation> {
    let logits = predict(model, input)?;
    let labels = graph.labels();
    Ok(Evaluation {
        train: metrics_from_logits(&logits, labels, &split.train)?,
        val: metrics_from_logits(&logits, labels, &split.val)?,
        test: metrics_from_logits(&logits, labels, &split.test)?,
        auc: macro_auc(&logits, labels, &split.train),
    })
}

struct RewiredGraph {
    state: RewireState,
    edges: Vec<(usize, usize)>,
    input: GraphInput,
}

/// Iteration with the best validation accuracy so far.
struct Snapshot {
    iteration: usize,
    val_acc: f64,
    test_acc: f64,
    homophily: f64,
    state: RewireState,
    edges: Vec<(usize, usize)>,
}

fn run_split(graph: &Graph, base: &EntropySequence, config: &RunConfig, index: usize, seed: u64) -> Result<SplitReport> {
    let split = stratified_split_with(graph, seed, config.fractions, config.small_classes)?;
    let sequences = match config.mode {
        Mode::Shuffled => base.shuffled(seed ^ SHUFFLE_STREAM),
        _ => base.clone(),
    };
    let mut bounds = StateBounds::standard(graph, &sequences, config.ppo.k_max)?;
    match config.mode {
        Mode::AddOnly => bounds = bounds.without_removals(),
        Mode::RemoveOnly => bounds = bounds.without_additions(),
        _ => {}
    }
    let labels = graph.labels();
    let gnn = &config.gnn;
    let mut model_rng = ChaCha8Rng::seed_from_u64(seed ^ MODEL_STREAM);
    let mut agent_rng = ChaCha8Rng::seed_from_u64(seed ^ AGENT_STREAM);
    let mut model = GcnModel::new(gnn.backbone, graph.num_features(), gnn.hidden, graph.num_classes(), gnn.dropout, &mut model_rng)?;
    let mut adam = AdamState::new(&model, gnn.learning_rate, gnn.weight_decay);
    let mut agent = if config.mode.uses_agent() {
        let policy = PolicyNet::new(graph.num_nodes(), config.ppo.hidden, config.ppo.k_max.max(1) as f64, config.ppo.learning_rate, &mut agent_rng)?;
        Some(Agent::new(policy, bounds.clone(), config.ppo)?)
    } else {
        None
    };
    let reward_params = RewardParams { lambda_r: config.lambda_r };

    let original_edges = graph.edges().to_vec();
    let homophily_original = homophily_or_zero(labels, &original_edges);
    let mut state = initial_state(config.mode, &bounds, &sequences, graph, seed);
    let mut cached: Option<RewiredGraph> = None;

    let mut series = Vec::with_capacity(config.iterations);
    let mut gate_acc = Vec::with_capacity(config.iterations);
    let mut trained_at = Vec::new();
    let mut max_acc = 0.0;
    let mut prev: Option<(TrainMetrics, f64)> = None;
    let mut episode_rewards: Vec<f64> = Vec::new();
    let mut best: Option<Snapshot> = None;

    for t in 0..config.iterations {
        let reuse = matches!(&cached, Some(c) if c.state.k == state.k && c.state.d == state.d);
        if !reuse {
            let edges = rewired_edges(graph, &state, &sequences)?;
            let rewired = graph.with_edges(edges.iter().copied())?;
            let input = GraphInput::new(&rewired, gnn.backbone);
            cached = Some(RewiredGraph { state: state.clone(), edges, input });
        }
        let RewiredGraph { edges, input, .. } = cached.as_ref().expect("graph input cached above");

        let gate = evaluate_all(&model, input, graph, &split)?;
        gate_acc.push(gate.train.accuracy);
        if gate.train.accuracy > max_acc {
            max_acc = gate.train.accuracy;
            train_epochs(&mut model, &mut adam, input, labels, &split, gnn.epochs, gnn.patience, &mut model_rng)?;
            trained_at.push(t);
        }

        if let (Some(agent), Some((prev_train, prev_auc))) = (agent.as_mut(), prev) {
            if agent.has_pending() {
                let r = match config.mode {
                    Mode::AucReward => gate.auc - prev_auc,
                    _ => reward(&gate.train, &prev_train, reward_params),
                };
                if !r.is_finite() {
                    return Err(RareError::NonFinite(format!("reward at iteration {t}")));
                }
                episode_rewards.push(r);
                agent.observe(r, &state)?;
            }
        }

        let after = evaluate_all(&model, input, graph, &split)?;
        let homophily = homophily_or_zero(labels, edges);
        if best.as_ref().is_none_or(|b| after.val.accuracy > b.val_acc) {
            best = Some(Snapshot {
                iteration: t,
                val_acc: after.val.accuracy,
                test_acc: after.test.accuracy,
                homophily,
                state: state.clone(),
                edges: edges.clone(),
            });
        }
        let mean_reward = if episode_rewards.is_empty() {
            0.0
        } else {
            episode_rewards.iter().sum::<f64>() / episode_rewards.len() as f64
        };
        series.push(IterationRecord {
            iteration: t,
            split: index,
            train_acc: after.train.accuracy,
            val_acc: after.val.accuracy,
            test_acc: after.test.accuracy,
            loss: after.train.loss,
            homophily,
            mean_reward,
            mean_k: state.mean_k(),
            mean_d: state.mean_d(),
        });
        prev = Some((after.train, after.auc));

        if let Some(agent) = agent.as_mut() {
            let (_, step) = agent.act(&state, &mut agent_rng)?;
            if step.reset {
                episode_rewards.clear();
            }
            state = step.next;
        }
    }

    let best = best.expect("at least one iteration ran");
    Ok(SplitReport {
        seed,
        series,
        gate_acc,
        trained_at,
        best_iteration: best.iteration,
        best_val_acc: best.val_acc,
        test_acc: best.test_acc,
        homophily_original,
        homophily_best: best.homophily,
        best_state: best.state,
        best_edges: best.edges,
        ppo_updates: agent.map_or(0, |a| a.updates),
    })
}

pub const METRICS_HEADER: [&str; 10] = [
    "iteration",
    "split",
    "train_acc",
    "val_acc",
    "test_acc",
    "loss",
    "homophily",
    "mean_reward",
    "mean_k",
    "mean_d",
];

/// Summary written to `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub dataset: String,
    pub mode: String,
    pub backbone: String,
    pub num_nodes: usize,
    pub original_edges: usize,
    pub optimized_edges: usize,
    pub splits: usize,
    pub seeds: Vec<u64>,
    pub test_accuracies: Vec<f64>,
    pub mean_test_acc: f64,
    pub std_test_acc: f64,
    pub best_split: usize,
    pub best_iteration: usize,
    pub homophily_original: f64,
    pub homophily_optimized: f64,
    pub mean_homophily_best: f64,
    pub trained_at: Vec<Vec<usize>>,
    pub iterations: usize,
    pub wall_seconds: f64,
    pub node_ids: Vec<String>,
    pub labels: Vec<usize>,
}

impl ReportSummary {
    pub fn from_report(report: &RunReport) -> Self {
        let best = report.best_split();
        let bs = &report.splits[best];
        Self {
            dataset: report.dataset.clone(),
            mode: report.mode.to_string(),
            backbone: report.backbone.to_string(),
            num_nodes: report.node_ids.len(),
            original_edges: report.original_edges,
            optimized_edges: bs.best_edges.len(),
            splits: report.splits.len(),
            seeds: report.splits.iter().map(|s| s.seed).collect(),
            test_accuracies: report.test_accuracies(),
            mean_test_acc: report.mean_test_acc(),
            std_test_acc: report.std_test_acc(),
            best_split: best,
            best_iteration: bs.best_iteration,
            homophily_original: bs.homophily_original,
            homophily_optimized: bs.homophily_best,
            mean_homophily_best: mean_std(&report.splits.iter().map(|s| s.homophily_best).collect::<Vec<_>>()).0,
            trained_at: report.splits.iter().map(|s| s.trained_at.clone()).collect(),
            iterations: report.splits.iter().map(|s| s.series.len()).max().unwrap_or(0),
            wall_seconds: report.wall_seconds,
            node_ids: report.node_ids.clone(),
            labels: report.labels.clone(),
        }
    }
}

pub const METRICS_FILE: &str = "metrics.csv";
pub const REPORT_FILE: &str = "report.json";
pub const EDGES_FILE: &str = "optimized.edges";

fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

/// Renders the per-iteration series as CSV text.
pub fn metrics_csv<'a>(records: impl IntoIterator<Item = &'a IterationRecord>) -> String {
    let mut out = METRICS_HEADER.join(",");
    out.push('\n');
    for r in records {
        let fields = [
            r.iteration.to_string(),
            r.split.to_string(),
            fmt_f64(r.train_acc),
            fmt_f64(r.val_acc),
            fmt_f64(r.test_acc),
            fmt_f64(r.loss),
            fmt_f64(r.homophily),
            fmt_f64(r.mean_reward),
            fmt_f64(r.mean_k),
            fmt_f64(r.mean_d),
        ];
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// Writes `metrics.csv`, `report.json` and `optimized.edges` (the best
/// graph of the split with the highest best-validation accuracy).
pub fn emit_report(report: &RunReport, out_dir: &Path) -> Result<()> {
    if report.splits.is_empty() {
        return Err(RareError::invalid("report has no splits"));
    }
    fs::create_dir_all(out_dir).map_err(|e| RareError::io(out_dir, e))?;
    let metrics = out_dir.join(METRICS_FILE);
    fs::write(&metrics, metrics_csv(report.records())).map_err(|e| RareError::io(&metrics, e))?;
    let summary = ReportSummary::from_report(report);
    let json = serde_json::to_string_pretty(&summary).map_err(|e| RareError::Format(e.to_string()))?;
    let path = out_dir.join(REPORT_FILE);
    fs::write(&path, json).map_err(|e| RareError::io(&path, e))?;
    let best = &report.splits[report.best_split()];
    write_edgelist(&report.node_ids, &best.best_edges, &out_dir.join(EDGES_FILE))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::erdos_renyi;
    use ndarray::array;

    fn small_config(mode: Mode) -> RunConfig {
        RunConfig {
            seeds: vec![0, 1],
            iterations: 12,
            mode,
            gnn: GnnConfig { hidden: 8, epochs: 5, ..GnnConfig::default() },
            ppo: PpoConfig { rollout_len: 4, horizon: 6, hidden: 8, ..PpoConfig::default() },
            ..RunConfig::default()
        }
    }

    fn fixture() -> (Graph, EntropyTable) {
        let g = erdos_renyi(30, 0.15, 4, 2, 5).unwrap();
        let t = EntropyTable::compute(&g, &EmbeddingConfig::identity(4), 1.0).unwrap();
        (g, t)
    }

    #[test]
    fn auc_examples() {
        let perfect = array![[2.0, 0.0], [1.5, 0.0], [0.0, 1.0], [0.0, 3.0]];
        assert_eq!(macro_auc(&perfect, &[0, 0, 1, 1], &[true; 4]), 1.0);
        let flat = Array2::zeros((4, 2));
        assert_eq!(macro_auc(&flat, &[0, 0, 1, 1], &[true; 4]), 0.5);
        let inverted = array![[0.0, 2.0], [0.0, 1.5], [1.0, 0.0], [3.0, 0.0]];
        assert_eq!(macro_auc(&inverted, &[0, 0, 1, 1], &[true; 4]), 0.0);
    }

    #[test]
    fn mode_tags() {
        for m in ["rare", "shuffled", "add-only", "remove-only", "auc-reward"] {
            assert_eq!(m.parse::<Mode>().unwrap().tag(), m);
        }
        assert!("fixed-k".parse::<Mode>().is_err());
        assert!("bogus".parse::<Mode>().is_err());
    }

    #[test]
    fn identity_mode_equals_baseline_and_runs_repeat() {
        let (g, t) = fixture();
        let cfg = small_config(Mode::FixedK { k: 0, d: 0 });
        let a = run_on(&g, &t, &cfg, "er").unwrap();
        let b = baseline_on(&g, &t, &small_config(Mode::Rare), "er").unwrap();
        assert_eq!(a.splits, b.splits);
        let rare1 = run_on(&g, &t, &small_config(Mode::Rare), "er").unwrap();
        let rare2 = run_on(&g, &t, &small_config(Mode::Rare), "er").unwrap();
        assert_eq!(metrics_csv(rare1.records()), metrics_csv(rare2.records()));
    }

    #[test]
    fn training_only_on_new_maxima() {
        let (g, t) = fixture();
        let r = run_on(&g, &t, &small_config(Mode::Rare), "er").unwrap();
        for s in &r.splits {
            let mut running = 0.0;
            for (i, &acc) in s.gate_acc.iter().enumerate() {
                assert_eq!(s.trained_at.contains(&i), acc > running);
                if acc > running {
                    running = acc;
                }
            }
            assert_eq!(s.series.len(), 12);
        }
    }

    #[test]
    fn ablation_modes_respect_their_constraints() {
        let (g, t) = fixture();
        let add = run_on(&g, &t, &small_config(Mode::AddOnly), "er").unwrap();
        for s in &add.splits {
            assert!(g.edges().iter().all(|e| s.best_edges.contains(e)));
        }
        let rem = run_on(&g, &t, &small_config(Mode::RemoveOnly), "er").unwrap();
        for s in &rem.splits {
            assert!(s.best_edges.iter().all(|&(u, v)| g.has_edge(u, v)));
        }
        let rk = run_on(&g, &t, &small_config(Mode::RandomK { range: 3 }), "er").unwrap();
        assert!(rk.splits[0].series.iter().all(|r| r.mean_k == rk.splits[0].series[0].mean_k));
        assert!(run_on(&g, &t, &small_config(Mode::AucReward), "er").is_ok());
    }

    #[test]
    fn emitted_bundle_is_consistent() {
        let (g, t) = fixture();
        let r = run_on(&g, &t, &small_config(Mode::Rare), "er").unwrap();
        let dir = tempfile::tempdir().unwrap();
        emit_report(&r, dir.path()).unwrap();
        let csv = fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap();
        assert_eq!(csv.lines().next().unwrap(), METRICS_HEADER.join(","));
        assert_eq!(csv.lines().count(), 1 + 2 * 12);
        let edges = fs::read_to_string(dir.path().join(EDGES_FILE)).unwrap();
        let best = &r.splits[r.best_split()];
        assert_eq!(edges.lines().count(), best.best_edges.len());
        let summary: ReportSummary = serde_json::from_str(&fs::read_to_string(dir.path().join(REPORT_FILE)).unwrap()).unwrap();
        assert_eq!(summary.optimized_edges, best.best_edges.len());
        assert_eq!(metrics_csv(std::iter::empty()), METRICS_HEADER.join(",") + "\n");
    }

    #[test]
    fn bad_configs_are_rejected() {
        let (g, t) = fixture();
        let mut cfg = small_config(Mode::Rare);
        cfg.seeds.clear();
        assert!(run_on(&g, &t, &cfg, "er").is_err());
        let mut cfg = small_config(Mode::Rare);
        cfg.lambda_r = -1.0;
        assert!(run_on(&g, &t, &cfg, "er").is_err());
        let other = erdos_renyi(10, 0.3, 4, 2, 1).unwrap();
        assert!(run_on(&other, &t, &small_config(Mode::Rare), "er").is_err());
        assert!(run(&small_config(Mode::Rare)).is_err());
    }
}
