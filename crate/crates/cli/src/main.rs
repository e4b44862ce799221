//! `rare`: entropy precomputation, rewiring runs, baselines and reports.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 bad input or dimension mismatch,
//! 3 non-finite values during training.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rare_core::graph::load_dataset_dir;
use rare_core::orchestrator::{self, homophily_or_zero, mean_std, ReportSummary, EDGES_FILE, METRICS_FILE, REPORT_FILE};
use rare_core::{Backbone, EmbeddingConfig, EntropyTable, Graph, Mode, RareError, RunConfig, RunReport};
use serde::Deserialize;

/// Name of the tall-format CSV written by `rare report`.
const PLOT_FILE: &str = "plot.csv";

#[derive(Debug)]
struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn input(message: impl Into<String>) -> Self {
        CliError { code: 2, message: message.into() }
    }

    fn io(path: &Path, err: impl fmt::Display) -> Self {
        CliError { code: 1, message: format!("{}: {err}", path.display()) }
    }
}

impl From<RareError> for CliError {
    fn from(e: RareError) -> Self {
        let code = match e {
            RareError::Io { .. } => 1,
            RareError::NonFinite(_) => 3,
            RareError::MissingFile(_)
            | RareError::Parse { .. }
            | RareError::InvalidInput(_)
            | RareError::DimensionMismatch(_)
            | RareError::Format(_) => 2,
        };
        CliError { code, message: e.to_string() }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "rare", version, about = "Relative-entropy guided graph rewiring for node classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Precompute the pairwise entropy table of a dataset.
    Entropy(EntropyArgs),
    /// Train the classifier and the rewiring agent jointly.
    Train(TrainArgs),
    /// Train the classifier on the unmodified graph.
    Baseline(RunArgs),
    /// Summarise one or more emitted runs.
    Report(ReportArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Embed {
    /// Raw features.
    Identity,
    /// Seeded Gaussian projection to 64 dimensions.
    Project,
    /// Identity up to 64 features, projection beyond.
    Auto,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum BackboneArg {
    Gcn,
    Sage,
}

impl From<BackboneArg> for Backbone {
    fn from(b: BackboneArg) -> Self {
        match b {
            BackboneArg::Gcn => Backbone::Gcn,
            BackboneArg::Sage => Backbone::SageMean,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Rare,
    FixedK,
    RandomK,
    Shuffled,
    AddOnly,
    RemoveOnly,
    AucReward,
}

#[derive(Args, Debug)]
struct EmbeddingArgs {
    /// Weight of structural entropy in the combined score.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    lambda: f64,

    /// Feature map applied before feature entropy.
    #[arg(long, value_enum, default_value_t = Embed::Auto)]
    embed: Embed,
}

#[derive(Args, Debug)]
struct EntropyArgs {
    /// Dataset directory holding a content file and an edges file.
    #[arg(long)]
    graph: PathBuf,

    #[command(flatten)]
    embedding: EmbeddingArgs,

    /// Seed of the random projection.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Output path of the binary entropy table.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Dataset directory holding a content file and an edges file.
    #[arg(long)]
    graph: PathBuf,

    /// Precomputed entropy table; computed from the graph when omitted.
    #[arg(long)]
    entropy: Option<PathBuf>,

    #[command(flatten)]
    embedding: EmbeddingArgs,

    /// Classifier backbone.
    #[arg(long, value_enum, default_value_t = BackboneArg::Gcn)]
    backbone: BackboneArg,

    /// Number of random splits.
    #[arg(long, default_value_t = 10)]
    splits: usize,

    /// First split seed; split i uses seed + i. Also seeds the projection.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Outer iterations per split.
    #[arg(long, default_value_t = 500)]
    iterations: usize,

    /// Weight of the loss term in the agent's reward.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    lambda_r: f64,

    /// Cap on the number of edges added per node.
    #[arg(long, default_value_t = rare_core::rl::DEFAULT_K_MAX)]
    k_max: usize,

    /// Output directory for metrics.csv, report.json and optimized.edges.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    run: RunArgs,

    /// Rewiring strategy.
    #[arg(long, value_enum, default_value_t = ModeArg::Rare)]
    mode: ModeArg,

    /// Edges added per node in fixed-k mode [no default; required there].
    #[arg(long)]
    k: Option<usize>,

    /// Edges removed per node in fixed-k mode [no default; required there].
    #[arg(long)]
    d: Option<usize>,

    /// Upper bound of the uniform per-node draws in random-k mode.
    #[arg(long, default_value_t = 10)]
    k_range: usize,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// A run directory, or a directory whose subdirectories are runs.
    #[arg(long = "in")]
    input: PathBuf,

    /// Tall-format CSV destination [default: <in>/plot.csv].
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Entropy(args) => cmd_entropy(&args),
        Command::Train(args) => cmd_train(&args),
        Command::Baseline(args) => cmd_run(&args, Mode::FixedK { k: 0, d: 0 }),
        Command::Report(args) => cmd_report(&args),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

/// Sizes the worker pool from `RARE_THREADS` (default: all cores).
fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var("RARE_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::input(format!("RARE_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::input(e.to_string()))
}

fn embedding_config(embed: Embed, features: usize, seed: u64) -> EmbeddingConfig {
    match embed {
        Embed::Identity => EmbeddingConfig::identity(features),
        Embed::Project => EmbeddingConfig::projection(rare_core::entropy::DEFAULT_PROJECTION_DIM, seed),
        Embed::Auto => EmbeddingConfig::auto(features, seed),
    }
}

fn check_lambda(name: &str, value: f64) -> CliResult<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(CliError::input(format!("--{name} must be finite and >= 0, got {value}")))
    }
}

fn cmd_entropy(args: &EntropyArgs) -> CliResult<()> {
    check_lambda("lambda", args.embedding.lambda)?;
    let start = Instant::now();
    let graph = load_dataset_dir(&args.graph)?;
    let config = embedding_config(args.embedding.embed, graph.num_features(), args.seed);
    let table = EntropyTable::compute(&graph, &config, args.embedding.lambda)?;
    fs::write(&args.out, table.to_bytes()).map_err(|e| CliError::io(&args.out, e))?;
    println!(
        "N={} lambda={} seconds={:.3} out={}",
        table.num_nodes(),
        table.lambda,
        start.elapsed().as_secs_f64(),
        args.out.display()
    );
    Ok(())
}

fn mode_from(args: &TrainArgs) -> CliResult<Mode> {
    let only = |flag: &str, present: bool, mode: &str| {
        if present {
            Err(CliError::input(format!("--{flag} only applies to --mode {mode}")))
        } else {
            Ok(())
        }
    };
    if args.mode != ModeArg::FixedK {
        only("k", args.k.is_some(), "fixed-k")?;
        only("d", args.d.is_some(), "fixed-k")?;
    }
    Ok(match args.mode {
        ModeArg::Rare => Mode::Rare,
        ModeArg::FixedK => {
            let k = args.k.ok_or_else(|| CliError::input("--mode fixed-k requires --k"))?;
            let d = args.d.ok_or_else(|| CliError::input("--mode fixed-k requires --d"))?;
            Mode::FixedK { k, d }
        }
        ModeArg::RandomK => Mode::RandomK { range: args.k_range },
        ModeArg::Shuffled => Mode::Shuffled,
        ModeArg::AddOnly => Mode::AddOnly,
        ModeArg::RemoveOnly => Mode::RemoveOnly,
        ModeArg::AucReward => Mode::AucReward,
    })
}

fn cmd_train(args: &TrainArgs) -> CliResult<()> {
    let mode = mode_from(args)?;
    cmd_run(&args.run, mode)
}

fn load_table(args: &RunArgs, graph: &Graph) -> CliResult<EntropyTable> {
    let table = match &args.entropy {
        Some(path) => EntropyTable::read_from(path)?,
        None => {
            let config = embedding_config(args.embedding.embed, graph.num_features(), args.seed);
            EntropyTable::compute(graph, &config, args.embedding.lambda)?
        }
    };
    if table.num_nodes() != graph.num_nodes() {
        return Err(RareError::DimensionMismatch(format!(
            "entropy table covers {} nodes, graph {} has {}",
            table.num_nodes(),
            args.graph.display(),
            graph.num_nodes()
        ))
        .into());
    }
    Ok(table)
}

fn run_config(args: &RunArgs, mode: Mode) -> CliResult<RunConfig> {
    check_lambda("lambda", args.embedding.lambda)?;
    check_lambda("lambda-r", args.lambda_r)?;
    if args.splits == 0 {
        return Err(CliError::input("--splits must be at least 1"));
    }
    let defaults = RunConfig::default();
    let seeds = (0..args.splits as u64).map(|i| args.seed.wrapping_add(i)).collect();
    Ok(RunConfig {
        dataset: Some(args.graph.clone()),
        lambda: args.embedding.lambda,
        lambda_r: args.lambda_r,
        seeds,
        ppo: rare_core::PpoConfig { k_max: args.k_max, ..defaults.ppo },
        gnn: rare_core::GnnConfig { backbone: args.backbone.into(), ..defaults.gnn },
        iterations: args.iterations,
        mode,
        embedding_seed: args.seed,
        ..defaults
    })
}

fn cmd_run(args: &RunArgs, mode: Mode) -> CliResult<()> {
    let config = run_config(args, mode)?;
    config.validate()?;
    let graph = load_dataset_dir(&args.graph)?;
    let table = load_table(args, &graph)?;
    let name = dataset_name(&args.graph);
    let report = orchestrator::run_on(&graph, &table, &config, &name)?;
    check_finite(&report)?;
    orchestrator::emit_report(&report, &args.out)?;
    let s = ReportSummary::from_report(&report);
    println!(
        "{} {} {}: test acc {:.2} ± {:.2} over {} splits, homophily {:.3} -> {:.3}, {:.1} s, wrote {}",
        s.dataset,
        s.mode,
        s.backbone,
        100.0 * s.mean_test_acc,
        100.0 * s.std_test_acc,
        s.splits,
        s.homophily_original,
        s.homophily_optimized,
        s.wall_seconds,
        args.out.display()
    );
    Ok(())
}

fn dataset_name(dir: &Path) -> String {
    let canonical = dir.canonicalize().unwrap_or_else(|_| dir.to_path_buf());
    canonical
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into())
}

fn check_finite(report: &RunReport) -> CliResult<()> {
    for r in report.records() {
        let values = [r.train_acc, r.val_acc, r.test_acc, r.loss, r.homophily, r.mean_reward];
        if values.iter().any(|x| !x.is_finite()) {
            return Err(RareError::NonFinite(format!("split {} iteration {}", r.split, r.iteration)).into());
        }
    }
    Ok(())
}

/// One `metrics.csv` row as read back by the report command.
#[derive(Debug, Deserialize)]
struct MetricsRow {
    iteration: usize,
    split: usize,
    train_acc: f64,
    val_acc: f64,
    test_acc: f64,
    loss: f64,
    homophily: f64,
    mean_reward: f64,
    mean_k: f64,
    mean_d: f64,
}

struct RunDir {
    name: String,
    summary: ReportSummary,
    homophily_after: f64,
    rows: Vec<MetricsRow>,
}

fn require(path: PathBuf) -> CliResult<PathBuf> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(CliError::input(format!("missing file {}", path.display())))
    }
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Homophily of `optimized.edges`, mapping identifiers back through the
/// node list stored in the report.
fn edges_homophily(path: &Path, summary: &ReportSummary) -> CliResult<f64> {
    let index: HashMap<&str, usize> = summary.node_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let mut edges = Vec::new();
    for (line_no, line) in read_text(path)?.lines().enumerate() {
        let mut parts = line.split_whitespace();
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            if line.trim().is_empty() {
                continue;
            }
            return Err(CliError::input(format!("{}:{}: expected two node ids", path.display(), line_no + 1)));
        };
        let lookup = |id: &str| {
            index
                .get(id)
                .copied()
                .ok_or_else(|| CliError::input(format!("{}:{}: unknown node {id:?}", path.display(), line_no + 1)))
        };
        edges.push((lookup(a)?, lookup(b)?));
    }
    if summary.labels.len() != summary.node_ids.len() {
        return Err(CliError::input(format!("{REPORT_FILE} has mismatched node and label lists")));
    }
    Ok(homophily_or_zero(&summary.labels, &edges))
}

fn load_run(dir: &Path) -> CliResult<RunDir> {
    let report = require(dir.join(REPORT_FILE))?;
    let metrics = require(dir.join(METRICS_FILE))?;
    let edges = require(dir.join(EDGES_FILE))?;
    let summary: ReportSummary = serde_json::from_str(&read_text(&report)?)
        .map_err(|e| CliError::input(format!("{}: {e}", report.display())))?;
    let homophily_after = edges_homophily(&edges, &summary)?;
    let mut reader = csv::Reader::from_path(&metrics).map_err(|e| CliError::io(&metrics, e))?;
    let rows = reader
        .deserialize()
        .collect::<Result<Vec<MetricsRow>, _>>()
        .map_err(|e| CliError::input(format!("{}: {e}", metrics.display())))?;
    let name = dir.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| ".".into());
    Ok(RunDir { name, summary, homophily_after, rows })
}

fn run_dirs(root: &Path) -> CliResult<Vec<PathBuf>> {
    if !root.is_dir() {
        return Err(CliError::input(format!("{} is not a directory", root.display())));
    }
    if root.join(REPORT_FILE).exists() {
        return Ok(vec![root.to_path_buf()]);
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| CliError::io(root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(REPORT_FILE).is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(CliError::input(format!("no {REPORT_FILE} found in {} or its subdirectories", root.display())));
    }
    Ok(dirs)
}

fn write_plot_csv(runs: &[RunDir], path: &Path) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    let io = |e: csv::Error| CliError::io(path, e);
    w.write_record(["run", "dataset", "mode", "split", "iteration", "metric", "value"]).map_err(io)?;
    for run in runs {
        for r in &run.rows {
            let metrics = [
                ("train_acc", r.train_acc),
                ("val_acc", r.val_acc),
                ("test_acc", r.test_acc),
                ("loss", r.loss),
                ("homophily", r.homophily),
                ("mean_reward", r.mean_reward),
                ("mean_k", r.mean_k),
                ("mean_d", r.mean_d),
            ];
            for (metric, value) in metrics {
                w.write_record([
                    run.name.as_str(),
                    run.summary.dataset.as_str(),
                    run.summary.mode.as_str(),
                    &r.split.to_string(),
                    &r.iteration.to_string(),
                    metric,
                    &value.to_string(),
                ])
                .map_err(io)?;
            }
        }
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn cmd_report(args: &ReportArgs) -> CliResult<()> {
    let runs = run_dirs(&args.input)?.iter().map(|d| load_run(d)).collect::<CliResult<Vec<_>>>()?;
    println!(
        "{:<20} {:<12} {:<22} {:<6} {:>6} {:>16} {:>10} {:>10}",
        "run", "dataset", "mode", "model", "splits", "test acc (%)", "h before", "h after"
    );
    for run in &runs {
        let s = &run.summary;
        let (mean, std) = mean_std(&s.test_accuracies);
        println!(
            "{:<20} {:<12} {:<22} {:<6} {:>6} {:>16} {:>10.4} {:>10.4}",
            run.name,
            s.dataset,
            s.mode,
            s.backbone,
            s.splits,
            format!("{:.2} ± {:.2}", 100.0 * mean, 100.0 * std),
            s.homophily_original,
            run.homophily_after
        );
    }
    let plot = args.out.clone().unwrap_or_else(|| args.input.join(PLOT_FILE));
    write_plot_csv(&runs, &plot)?;
    println!("wrote {}", plot.display());
    Ok(())
}
