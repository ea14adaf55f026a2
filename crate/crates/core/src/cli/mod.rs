//! The `magnet` command line: generate data, train, evaluate, explain,
//! benchmark and render reports.
//!
//! Exit codes: 0 on success, 2 when flags fail validation, 1 when the work
//! itself fails (unreadable files, schema errors, degenerate training sets).

mod bench;
mod report;

pub use bench::{format_g, BenchmarkRow, CSV_HEADER};
pub use report::{render_svg, render_table};

use crate::estimator::gcn::{train_gcn_baseline, GcnConfig};
use crate::estimator::{evaluate_accuracy, train_magnet, ActorConfig};
use crate::interpreter::{explain, ExplanationConfig, TargetMode, Thresholds};
use crate::io::{self, SavedModel};
use crate::synth::{generate_setting1, generate_setting2_default, GraphDataset, SynthParams};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

fn invalid(flag: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("invalid value for {flag}: {msg}"))
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "magnet", version, about = "Multi-order graph classification with mask-based explanations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Command {
    /// Write a synthetic dataset.
    Generate(GenerateArgs),
    /// Fit the estimator (or the GCN baseline) on the training split.
    Train(TrainArgs),
    /// Accuracy of a saved model.
    Evaluate(EvaluateArgs),
    /// Fit edge and feature masks for a saved model.
    Explain(ExplainArgs),
    /// Repeat generate, split, train, evaluate, explain and score over seeds.
    Benchmark(BenchmarkArgs),
    /// Render a benchmark CSV as a text table and an SVG bar chart.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    None,
    Gcn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetModeArg {
    #[value(name = "fixed_full")]
    FixedFull,
    #[value(name = "masked_features")]
    MaskedFeatures,
}

impl From<TargetModeArg> for TargetMode {
    fn from(t: TargetModeArg) -> Self {
        match t {
            TargetModeArg::FixedFull => TargetMode::FixedFull,
            TargetModeArg::MaskedFeatures => TargetMode::MaskedFeatures,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    /// 1: Gaussian/uniform nodes, linear rule. 2: Gaussian-process nodes, nonlinear rule.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub setting: u8,
    /// Number of graph instances.
    #[arg(long, default_value_t = 250)]
    pub n: usize,
    #[arg(long, default_value_t = 30)]
    pub nodes: usize,
    #[arg(long, default_value_t = 10)]
    pub important: usize,
    #[arg(long = "feat-dim", default_value_t = 25)]
    pub feat_dim: usize,
}

impl DataArgs {
    fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(invalid("--n", format!("need at least 2 instances, got {}", self.n)));
        }
        if self.nodes < 2 {
            return Err(invalid("--nodes", format!("need at least 2 nodes, got {}", self.nodes)));
        }
        if self.important == 0 || self.important >= self.nodes {
            return Err(invalid(
                "--important",
                format!("must lie in 1..{} (below --nodes), got {}", self.nodes - 1, self.important),
            ));
        }
        let min_p = if self.setting == 2 { 3 } else { 1 };
        if self.feat_dim < min_p {
            return Err(invalid(
                "--feat-dim",
                format!("setting {} needs at least {min_p}, got {}", self.setting, self.feat_dim),
            ));
        }
        Ok(())
    }

    fn generate(&self, seed: u64) -> Result<GraphDataset> {
        let params = SynthParams::new(self.n, self.nodes, self.important, self.feat_dim, seed);
        let data = match self.setting {
            1 => generate_setting1(&params),
            _ => generate_setting2_default(&params),
        };
        data.map_err(runtime)
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ExplainFlags {
    #[arg(long = "lambda-edge", default_value_t = 0.005)]
    pub lambda_edge: f64,
    #[arg(long = "lambda-feature", default_value_t = 0.1)]
    pub lambda_feature: f64,
    #[arg(long = "omega-start", default_value_t = 1.0)]
    pub omega_start: f64,
    #[arg(long = "omega-end", default_value_t = 0.1)]
    pub omega_end: f64,
    /// Optimisation steps for the masks.
    #[arg(long, default_value_t = 300)]
    pub iters: usize,
    #[arg(long = "target-mode", value_enum, default_value_t = TargetModeArg::FixedFull)]
    pub target_mode: TargetModeArg,
}

impl ExplainFlags {
    fn validate(&self) -> Result<()> {
        for (flag, v) in [("--lambda-edge", self.lambda_edge), ("--lambda-feature", self.lambda_feature)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(flag, format!("must be a finite value >= 0, got {v}")));
            }
        }
        for (flag, v) in [("--omega-start", self.omega_start), ("--omega-end", self.omega_end)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(flag, format!("must be a finite value > 0, got {v}")));
            }
        }
        if self.omega_end > self.omega_start {
            return Err(invalid("--omega-end", "must not exceed --omega-start"));
        }
        if self.iters == 0 {
            return Err(invalid("--iters", "must be >= 1"));
        }
        Ok(())
    }

    fn config(&self, seed: u64) -> ExplanationConfig {
        ExplanationConfig {
            lambda_edge: self.lambda_edge,
            lambda_feature: self.lambda_feature,
            omega_start: self.omega_start,
            omega_end: self.omega_end,
            iters: self.iters,
            seed,
            target_mode: self.target_mode.into(),
            ..ExplanationConfig::default()
        }
    }
}

fn check_k(k: usize) -> Result<()> {
    if !(1..=20).contains(&k) {
        return Err(invalid("--k", format!("must lie in 1..=20, got {k}")));
    }
    Ok(())
}

fn check_split(split: f64) -> Result<()> {
    if !(split > 0.0 && split < 1.0) {
        return Err(invalid("--split", format!("must lie strictly between 0 and 1, got {split}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenerateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// Number of Laplacian orders.
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Fraction of instances used for training.
    #[arg(long, default_value_t = 0.7)]
    pub split: f64,
    #[arg(long, value_enum, default_value_t = Baseline::None)]
    pub baseline: Baseline,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// With --split, score only the held-out part of that split.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub split: Option<f64>,
    /// Also write the result as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ExplainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// With a split, explain only the held-out part.
    #[arg(long)]
    pub split: Option<f64>,
    /// Keep this many top-scoring nodes instead of thresholding.
    #[arg(long = "top-m")]
    pub top_m: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub explain: ExplainFlags,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BenchmarkArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 0.7)]
    pub split: f64,
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    #[arg(long, value_enum, default_value_t = Baseline::None)]
    pub baseline: Baseline,
    #[command(flatten)]
    #[serde(flatten)]
    pub explain: ExplainFlags,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReportArgs {
    /// Benchmark CSV to read.
    #[arg(long)]
    pub data: PathBuf,
    /// SVG destination. The text table always goes to standard output.
    #[arg(long)]
    pub out: PathBuf,
}

/// Configuration record embedded in every artifact.
fn provenance(command: &Command) -> Value {
    json!({ "tool": "magnet", "version": env!("CARGO_PKG_VERSION"), "run_config": command })
}

pub fn run(cli: &Cli) -> Result<()> {
    let prov = provenance(&cli.command);
    match &cli.command {
        Command::Generate(a) => cmd_generate(a, &prov),
        Command::Train(a) => cmd_train(a, &prov),
        Command::Evaluate(a) => cmd_evaluate(a, &prov),
        Command::Explain(a) => cmd_explain(a, &prov),
        Command::Benchmark(a) => cmd_benchmark(a, &prov),
        Command::Report(a) => cmd_report(a),
    }
}

fn load_data(path: &Path) -> Result<GraphDataset> {
    io::load_dataset(path).map_err(runtime)
}

fn load_model(path: &Path) -> Result<SavedModel> {
    io::load_model(path).map_err(runtime)
}

fn cmd_generate(a: &GenerateArgs, prov: &Value) -> Result<()> {
    a.data.validate()?;
    let data = a.data.generate(a.seed)?;
    io::save_dataset(&a.out, &data, prov).map_err(runtime)?;
    println!(
        "wrote {} instances on {} nodes ({} edges) to {}",
        data.len(),
        data.n_nodes(),
        data.adjacency().n_edges(),
        a.out.display()
    );
    Ok(())
}

fn accuracy(model: &SavedModel, data: &GraphDataset) -> Result<f64> {
    match model {
        SavedModel::Magnet(m) => evaluate_accuracy(m, data),
        SavedModel::Gcn(g) => g.accuracy(data),
    }
    .map_err(runtime)
}

fn cmd_train(a: &TrainArgs, prov: &Value) -> Result<()> {
    check_k(a.k)?;
    check_split(a.split)?;
    let data = load_data(&a.data)?;
    let (train, test) = data.split(a.split, a.seed);
    let model = match a.baseline {
        Baseline::None => {
            let cfg = ActorConfig { seed: a.seed, ..ActorConfig::with_orders(a.k) };
            SavedModel::Magnet(train_magnet(&train, &cfg).map_err(runtime)?)
        }
        Baseline::Gcn => {
            let cfg = GcnConfig { seed: a.seed, ..GcnConfig::default() };
            SavedModel::Gcn(train_gcn_baseline(&train, &cfg).map_err(runtime)?)
        }
    };
    io::save_model(&a.out, &model, prov).map_err(runtime)?;
    let train_acc = accuracy(&model, &train)?;
    let test_acc = if test.is_empty() { f64::NAN } else { accuracy(&model, &test)? };
    println!(
        "trained on {} instances: train accuracy {}, held-out accuracy {} ({} instances)",
        train.len(),
        format_g(train_acc),
        format_g(test_acc),
        test.len()
    );
    Ok(())
}

/// The whole file, or the held-out part of a seeded split.
fn select_part(data: GraphDataset, split: Option<f64>, seed: Option<u64>, command: &str) -> Result<GraphDataset> {
    match (split, seed) {
        (None, _) => Ok(data),
        (Some(s), Some(seed)) => {
            check_split(s)?;
            Ok(data.split(s, seed).1)
        }
        (Some(_), None) => Err(invalid("--seed", format!("{command} --split needs --seed to reproduce the split"))),
    }
}

fn cmd_evaluate(a: &EvaluateArgs, prov: &Value) -> Result<()> {
    if a.split.is_some() && a.seed.is_none() {
        return Err(invalid("--seed", "evaluate --split needs --seed to reproduce the split"));
    }
    let model = load_model(&a.model)?;
    let data = select_part(load_data(&a.data)?, a.split, a.seed, "evaluate")?;
    let acc = accuracy(&model, &data)?;
    println!("accuracy {} on {} instances", format_g(acc), data.len());
    if let Some(out) = &a.out {
        let doc = json!({
            "schema_version": io::SCHEMA_VERSION,
            "accuracy": acc,
            "instances": data.len(),
            "provenance": prov,
        });
        let text = serde_json::to_string_pretty(&doc).map_err(runtime)? + "\n";
        std::fs::write(out, text).map_err(|e| runtime(format!("{}: {e}", out.display())))?;
    }
    Ok(())
}

fn cmd_explain(a: &ExplainArgs, prov: &Value) -> Result<()> {
    a.explain.validate()?;
    if a.top_m == Some(0) {
        return Err(invalid("--top-m", "must be >= 1"));
    }
    let data = select_part(load_data(&a.data)?, a.split, Some(a.seed), "explain")?;
    if let Some(m) = a.top_m {
        if m > data.n_nodes() {
            return Err(invalid("--top-m", format!("graph has only {} nodes, got {m}", data.n_nodes())));
        }
    }
    let SavedModel::Magnet(model) = load_model(&a.model)? else {
        return Err(CliError::Runtime("explain needs an estimator model, not a GCN baseline".into()));
    };
    let thresholds = Thresholds { top_m_nodes: a.top_m, ..Thresholds::default() };
    let e = explain(&model, &data, &a.explain.config(a.seed), &thresholds).map_err(runtime)?;
    io::save_explanation(&a.out, &e, prov).map_err(runtime)?;
    println!(
        "kept {} of {} edges, {} nodes, {} of {} features; final loss {}",
        e.kept_edges.len(),
        data.adjacency().n_edges(),
        e.kept_nodes.len(),
        e.kept_features.len(),
        data.feat_dim(),
        format_g(e.loss_trajectory.last().copied().unwrap_or(f64::NAN))
    );
    Ok(())
}

fn cmd_benchmark(a: &BenchmarkArgs, prov: &Value) -> Result<()> {
    a.data.validate()?;
    check_k(a.k)?;
    check_split(a.split)?;
    a.explain.validate()?;
    if a.repeats == 0 {
        return Err(invalid("--repeats", "must be >= 1"));
    }
    let threads = bench::worker_count()?;
    let rows = bench::run_benchmark(a, threads)?;
    let csv = bench::to_csv(&rows).map_err(runtime)?;
    match &a.out {
        Some(path) => {
            std::fs::write(path, &csv).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
            let side = bench::provenance_path(path);
            let text =
                serde_json::to_string_pretty(&json!({ "schema_version": io::SCHEMA_VERSION, "provenance": prov }))
                    .map_err(runtime)?
                    + "\n";
            std::fs::write(&side, text).map_err(|e| runtime(format!("{}: {e}", side.display())))?;
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn cmd_report(a: &ReportArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.data).map_err(|e| runtime(format!("{}: {e}", a.data.display())))?;
    let rows = bench::from_csv(&text).map_err(|e| runtime(format!("{}: {e}", a.data.display())))?;
    let prov =
        json!({ "tool": "magnet", "version": env!("CARGO_PKG_VERSION"), "source": a.data.display().to_string() });
    std::fs::write(&a.out, render_svg(&rows, &prov)).map_err(|e| runtime(format!("{}: {e}", a.out.display())))?;
    print!("{}", render_table(&rows));
    Ok(())
}
