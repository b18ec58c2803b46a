//! The `copool` command line.
//!
//! Every subcommand accepts the same option set. Options can also come from a
//! flat `key = value` file given with `--config`. Keys are the long flag names
//! without the leading dashes (`weight-decay = 0.001`), `#` starts a comment,
//! and flags given on the command line win over the file.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 runtime error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::copool::PoolMode;
use crate::data::{holdout_split, GraphDataset, PerturbMode};
use crate::error::{Error, Result};
use crate::harness::{
    evaluate_ids, gamma_values, grid_search_cv, incomplete_ratios, load_dataset, perturbation_ratios,
    regression_spec, run_gamma_sweep, run_incomplete, run_perturbation, run_regression, train_one, CVReport,
    CvSettings, DatasetStats, Grid, OutputDir, SweepReport, TableRow, TrainSpec,
};
use crate::model::save_checkpoint;
use crate::rng::{derive, TAG_SPLIT};

#[derive(Parser, Debug)]
#[command(name = "copool", version, about = "Cross-view graph pooling: training and experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one model on a single 80/10/10 split
    Train(Opts),
    /// Grid search with k-fold cross-validation
    Cv(Opts),
    /// Cross-validated accuracy under edge dropping or adding
    Perturb(Opts),
    /// Cross-validated accuracy with node attributes removed
    Incomplete(Opts),
    /// Cross-validated accuracy for each edge retaining ratio
    GammaSweep(Opts),
    /// Repeated holdout regression runs with L1 loss
    Regress(Opts),
    /// Print dataset statistics
    Inspect(Opts),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Ablation {
    None,
    NoGpr,
    NoNodeView,
}

impl From<Ablation> for PoolMode {
    fn from(a: Ablation) -> Self {
        match a {
            Ablation::None => PoolMode::Full,
            Ablation::NoGpr => PoolMode::NoGpr,
            Ablation::NoNodeView => PoolMode::NoNodeView,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Mode {
    Drop,
    AddFromEmpty,
}

#[derive(Args, Debug, Clone)]
struct Opts {
    /// TU dataset name, or SYNTH-CLS / SYNTH-REG (optionally NAME:COUNT)
    #[arg(long)]
    dataset: Option<String>,
    /// Directory holding the TU files
    #[arg(long)]
    data_root: Option<PathBuf>,
    /// Master seed; required by cv and the experiment subcommands
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for folds and grid points
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    gpr_steps: Option<usize>,
    #[arg(long, value_enum)]
    ablation: Option<Ablation>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Width of the all-one attributes given to plain datasets
    #[arg(long)]
    pad_dim: Option<usize>,
    /// Reduced grid (learning rate 0.001, hidden size 64)
    #[arg(long)]
    fast: bool,
    /// Flat key = value option file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    /// Graphs per mini-batch, 0 for full batch
    #[arg(long)]
    batch_size: Option<usize>,
    /// Number of cross-validation folds
    #[arg(long)]
    folds: Option<usize>,
    /// Number of regression runs
    #[arg(long)]
    runs: Option<usize>,
    /// Edge perturbation mode
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Comma-separated ratios (or gammas) overriding the experiment defaults
    #[arg(long)]
    ratios: Option<String>,
    /// Score nodes without the extra identity on top of the cut matrix
    #[arg(long)]
    single_self_loop: bool,
}

const CONFIG_KEYS: &[&str] = &[
    "dataset",
    "data-root",
    "seed",
    "jobs",
    "gamma",
    "epsilon",
    "hidden",
    "lr",
    "weight-decay",
    "dropout",
    "gpr-steps",
    "ablation",
    "out",
    "pad-dim",
    "fast",
    "max-epochs",
    "patience",
    "batch-size",
    "folds",
    "runs",
    "mode",
    "ratios",
    "single-self-loop",
];

fn parse_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("{}:{}: expected key = value", path.display(), i + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if !CONFIG_KEYS.contains(&k) {
            return Err(Error::Config(format!("{}:{}: unknown key {k:?}", path.display(), i + 1)));
        }
        if map.insert(k.to_string(), v.to_string()).is_some() {
            return Err(Error::Config(format!("{}:{}: duplicate key {k:?}", path.display(), i + 1)));
        }
    }
    Ok(map)
}

fn fill<T: FromStr>(slot: &mut Option<T>, map: &BTreeMap<String, String>, key: &str) -> Result<()>
where
    T::Err: std::fmt::Display,
{
    if slot.is_none() {
        if let Some(v) = map.get(key) {
            *slot = Some(v.parse().map_err(|e| Error::Config(format!("config key {key}: {e}")))?);
        }
    }
    Ok(())
}

fn fill_enum<T: ValueEnum>(slot: &mut Option<T>, map: &BTreeMap<String, String>, key: &str) -> Result<()> {
    if slot.is_none() {
        if let Some(v) = map.get(key) {
            *slot = Some(T::from_str(v, false).map_err(|e| Error::Config(format!("config key {key}: {e}")))?);
        }
    }
    Ok(())
}

fn fill_flag(slot: &mut bool, map: &BTreeMap<String, String>, key: &str) -> Result<()> {
    if let Some(v) = map.get(key) {
        let on: bool = v.parse().map_err(|e| Error::Config(format!("config key {key}: {e}")))?;
        *slot |= on;
    }
    Ok(())
}

impl Opts {
    fn merge_config(mut self) -> Result<Self> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let m = parse_config_file(&path)?;
        fill(&mut self.dataset, &m, "dataset")?;
        fill(&mut self.data_root, &m, "data-root")?;
        fill(&mut self.seed, &m, "seed")?;
        fill(&mut self.jobs, &m, "jobs")?;
        fill(&mut self.gamma, &m, "gamma")?;
        fill(&mut self.epsilon, &m, "epsilon")?;
        fill(&mut self.hidden, &m, "hidden")?;
        fill(&mut self.lr, &m, "lr")?;
        fill(&mut self.weight_decay, &m, "weight-decay")?;
        fill(&mut self.dropout, &m, "dropout")?;
        fill(&mut self.gpr_steps, &m, "gpr-steps")?;
        fill_enum(&mut self.ablation, &m, "ablation")?;
        fill(&mut self.out, &m, "out")?;
        fill(&mut self.pad_dim, &m, "pad-dim")?;
        fill_flag(&mut self.fast, &m, "fast")?;
        fill(&mut self.max_epochs, &m, "max-epochs")?;
        fill(&mut self.patience, &m, "patience")?;
        fill(&mut self.batch_size, &m, "batch-size")?;
        fill(&mut self.folds, &m, "folds")?;
        fill(&mut self.runs, &m, "runs")?;
        fill_enum(&mut self.mode, &m, "mode")?;
        fill(&mut self.ratios, &m, "ratios")?;
        fill_flag(&mut self.single_self_loop, &m, "single-self-loop")?;
        Ok(self)
    }
}

/// Fully resolved options, written to `config_echo.json`.
#[derive(Debug, Clone, Serialize)]
struct RunConfig {
    command: String,
    dataset: String,
    data_root: Option<PathBuf>,
    seed: u64,
    jobs: usize,
    out: PathBuf,
    pad_dim: usize,
    fast: bool,
    folds: usize,
    runs: usize,
    mode: Mode,
    ratios: Option<Vec<f64>>,
    ablation: Ablation,
    spec: TrainSpec,
    grid: Grid,
}

fn needs_seed(command: &str) -> bool {
    !matches!(command, "train" | "inspect")
}

fn parse_ratios(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("ratio {t:?}: {e}")))
        })
        .collect()
}

fn resolve(command: &str, o: Opts) -> Result<RunConfig> {
    let dataset = o
        .dataset
        .clone()
        .ok_or_else(|| Error::Config("--dataset is required".into()))?;
    let seed = match (o.seed, needs_seed(command)) {
        (Some(s), _) => s,
        (None, false) => 0,
        (None, true) => return Err(Error::Config(format!("`{command}` requires --seed"))),
    };
    let ablation = o.ablation.unwrap_or(Ablation::None);
    let defaults = if command == "regress" {
        regression_spec(&TrainSpec::default())
    } else {
        TrainSpec::default()
    };
    let spec = TrainSpec {
        lr: o.lr.unwrap_or(defaults.lr),
        weight_decay: o.weight_decay.unwrap_or(defaults.weight_decay),
        epsilon: o.epsilon.unwrap_or(defaults.epsilon),
        hidden: o.hidden.unwrap_or(defaults.hidden),
        dropout: o.dropout.unwrap_or(defaults.dropout),
        gamma: o.gamma.unwrap_or(defaults.gamma),
        gpr_steps: o.gpr_steps.unwrap_or(defaults.gpr_steps),
        mode: ablation.into(),
        double_self_loop: !o.single_self_loop,
        max_epochs: o.max_epochs.unwrap_or(defaults.max_epochs),
        patience: o.patience.unwrap_or(defaults.patience),
        batch_size: o.batch_size.unwrap_or(defaults.batch_size),
        plateau: defaults.plateau,
        seed,
    };
    spec.validate()?;
    if !(0.0..1.0).contains(&spec.dropout) {
        return Err(Error::Config(format!("dropout {} outside [0, 1)", spec.dropout)));
    }
    if spec.hidden == 0 {
        return Err(Error::Config("hidden size must be at least 1".into()));
    }
    let mut grid = if o.fast { Grid::fast() } else { Grid::full() };
    if let Some(v) = o.lr {
        grid.lr = vec![v];
    }
    if let Some(v) = o.weight_decay {
        grid.weight_decay = vec![v];
    }
    if let Some(v) = o.epsilon {
        grid.epsilon = vec![v];
    }
    if let Some(v) = o.hidden {
        grid.hidden = vec![v];
    }
    if let Some(v) = o.dropout {
        grid.dropout = vec![v];
    }
    let folds = o.folds.unwrap_or(10);
    if folds < 3 {
        return Err(Error::Config(format!("--folds {folds}: need at least 3")));
    }
    let ratios = o.ratios.as_deref().map(parse_ratios).transpose()?;
    Ok(RunConfig {
        command: command.to_string(),
        dataset,
        data_root: o.data_root,
        seed,
        jobs: o.jobs.unwrap_or(1).max(1),
        out: o.out.unwrap_or_else(|| PathBuf::from("results")),
        pad_dim: o.pad_dim.unwrap_or(1),
        fast: o.fast,
        folds,
        runs: o.runs.unwrap_or(4).max(1),
        mode: o.mode.unwrap_or(Mode::Drop),
        ratios,
        ablation,
        spec,
        grid,
    })
}

/// Entry point used by the binary; returns the process exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let (name, opts) = match cli.command {
        Command::Train(o) => ("train", o),
        Command::Cv(o) => ("cv", o),
        Command::Perturb(o) => ("perturb", o),
        Command::Incomplete(o) => ("incomplete", o),
        Command::GammaSweep(o) => ("gamma-sweep", o),
        Command::Regress(o) => ("regress", o),
        Command::Inspect(o) => ("inspect", o),
    };
    let explicit_out = opts.out.is_some();
    let config = match opts.merge_config().and_then(|o| resolve(name, o)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            eprintln!("run `copool {name} --help` for usage");
            return 1;
        }
    };
    match execute(&config, explicit_out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn execute(cfg: &RunConfig, explicit_out: bool) -> Result<()> {
    let ds = load_dataset(&cfg.dataset, cfg.data_root.as_deref(), cfg.pad_dim)?;
    ds.validate()?;
    if cfg.command == "inspect" {
        print_stats(&DatasetStats::of(&ds));
        if explicit_out {
            let out = OutputDir::create(&cfg.out)?;
            out.write_json("config_echo.json", cfg)?;
            out.write_json("report.json", &DatasetStats::of(&ds))?;
        }
        return Ok(());
    }
    let out = OutputDir::create(&cfg.out)?;
    out.write_json("config_echo.json", cfg)?;
    match cfg.command.as_str() {
        "train" => cmd_train(cfg, &ds, &out),
        "cv" => {
            let report = grid_search_cv(&ds, &cfg.grid, &cfg.spec, cfg.folds, cfg.seed, cfg.jobs)?;
            write_cv(&out, "cv", &report)
        }
        "perturb" => {
            let mode = match cfg.mode {
                Mode::Drop => PerturbMode::Drop,
                Mode::AddFromEmpty => PerturbMode::AddFromEmpty,
            };
            let ratios = cfg.ratios.clone().unwrap_or_else(perturbation_ratios);
            let report = run_perturbation(&ds, mode, &ratios, &settings(cfg))?;
            write_sweep(&out, &report)
        }
        "incomplete" => {
            let ratios = cfg.ratios.clone().unwrap_or_else(incomplete_ratios);
            let report = run_incomplete(&ds, &ratios, &settings(cfg))?;
            write_sweep(&out, &report)
        }
        "gamma-sweep" => {
            let gammas = cfg.ratios.clone().unwrap_or_else(gamma_values);
            let report = run_gamma_sweep(&ds, &gammas, &settings(cfg))?;
            write_sweep(&out, &report)
        }
        "regress" => {
            let report = run_regression(&ds, &cfg.spec, cfg.runs, cfg.seed, cfg.jobs)?;
            for (i, r) in report.runs.iter().enumerate() {
                out.write_history(&i.to_string(), &r.history)?;
            }
            out.write_table(&report.rows())?;
            out.write_json("report.json", &report)?;
            println!(
                "{}: MAE {:.4} +- {:.4} (mean predictor {:.4})",
                report.dataset, report.mean_mae, report.std_mae, report.mean_baseline_mae
            );
            Ok(())
        }
        other => Err(Error::Config(format!("unknown command {other}"))),
    }
}

fn settings(cfg: &RunConfig) -> CvSettings {
    CvSettings {
        grid: cfg.grid.clone(),
        base: cfg.spec.clone(),
        k: cfg.folds,
        seed: cfg.seed,
        jobs: cfg.jobs,
    }
}

fn print_stats(s: &DatasetStats) {
    println!("dataset     {}", s.name);
    println!("graphs      {}", s.graphs);
    match s.classes {
        Some(c) => println!("classes     {c}"),
        None => println!("classes     - (regression)"),
    }
    println!("mean nodes  {:.2}", s.mean_nodes);
    println!("mean edges  {:.2}", s.mean_edges);
    println!("attributes  {:?} (dim {})", s.attr_kind, s.attr_dim);
}

#[derive(Serialize)]
struct TrainReport {
    dataset: String,
    metric: &'static str,
    best_epoch: usize,
    val_loss: f64,
    val_metric: f64,
    test_metric: f64,
    spec: TrainSpec,
}

fn cmd_train(cfg: &RunConfig, ds: &GraphDataset, out: &OutputDir) -> Result<()> {
    let split = holdout_split(ds.len(), derive(cfg.seed, &[TAG_SPLIT]))?;
    let outcome = train_one(ds, &split.train_ids, &split.val_ids, &cfg.spec)?;
    let (_, test_metric) = evaluate_ids(&outcome.params, &outcome.config, ds, &split.test_ids)?;
    out.write_history("0", &outcome.history)?;
    save_checkpoint(&out.root().join("model.ckpt"), &outcome.params, &outcome.config)?;
    let report = TrainReport {
        dataset: ds.name.clone(),
        metric: crate::harness::metric_name(ds.task),
        best_epoch: outcome.best_epoch,
        val_loss: outcome.best_val_loss,
        val_metric: outcome.best_val_metric,
        test_metric,
        spec: cfg.spec.clone(),
    };
    out.write_table(&[TableRow {
        key: "train".into(),
        mean: test_metric,
        std: 0.0,
        seed: cfg.seed,
    }])?;
    out.write_json("report.json", &report)?;
    println!(
        "{}: best epoch {}, test {} {:.4}",
        report.dataset, report.best_epoch, report.metric, test_metric
    );
    Ok(())
}

fn write_cv(out: &OutputDir, key: &str, report: &CVReport) -> Result<()> {
    for f in &report.folds {
        out.write_history(&f.fold.to_string(), &f.history)?;
    }
    out.write_table(&[TableRow {
        key: key.to_string(),
        mean: report.mean,
        std: report.std,
        seed: report.seed,
    }])?;
    out.write_json("report.json", report)?;
    println!(
        "{}: test {} {:.4} +- {:.4} over {} folds",
        report.dataset,
        report.metric,
        report.mean,
        report.std,
        report.folds.len()
    );
    Ok(())
}

fn write_sweep(out: &OutputDir, report: &SweepReport) -> Result<()> {
    for (row, run) in report.rows.iter().zip(&report.runs) {
        for f in &run.folds {
            out.write_history(&format!("{}_{}", row.key, f.fold), &f.history)?;
        }
        println!("{:<16} {:.4} +- {:.4}", row.key, row.mean, row.std);
    }
    out.write_table(&report.rows)?;
    out.write_json("report.json", report)
}
