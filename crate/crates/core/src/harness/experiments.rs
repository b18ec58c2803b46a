use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cv::{grid_search_cv, CVReport, Grid};
use super::train::{evaluate_ids, train_one, EpochRow, Plateau, TrainSpec};
use super::{mean_std, run_parallel, TableRow};
use crate::data::{holdout_split, make_incomplete, perturb_edges, GraphDataset, PerturbMode};
use crate::error::{Error, Result};
use crate::rng::{derive, TAG_SPLIT, TAG_TRANSFORM};

/// One CV run per setting of a swept variable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub experiment: String,
    pub rows: Vec<TableRow>,
    pub runs: Vec<CVReport>,
}

/// Shared CV settings of the sweep drivers.
#[derive(Clone, Debug)]
pub struct CvSettings {
    pub grid: Grid,
    pub base: TrainSpec,
    pub k: usize,
    pub seed: u64,
    pub jobs: usize,
}

impl CvSettings {
    fn run(&self, ds: &GraphDataset, base: &TrainSpec) -> Result<CVReport> {
        grid_search_cv(ds, &self.grid, base, self.k, self.seed, self.jobs)
    }
}

pub fn ratio_key(prefix: &str, r: f64) -> String {
    format!("{prefix}-{r:.1}")
}

fn sweep(
    experiment: &str,
    settings: &CvSettings,
    points: Vec<(String, GraphDataset, TrainSpec)>,
) -> Result<SweepReport> {
    let mut rows = Vec::with_capacity(points.len());
    let mut runs = Vec::with_capacity(points.len());
    for (key, ds, base) in points {
        let report = settings.run(&ds, &base)?;
        rows.push(TableRow {
            key,
            mean: report.mean,
            std: report.std,
            seed: settings.seed,
        });
        runs.push(report);
    }
    Ok(SweepReport {
        experiment: experiment.to_string(),
        rows,
        runs,
    })
}

/// Ratios 0, 0.2, ..., 1.0.
pub fn perturbation_ratios() -> Vec<f64> {
    (0..=5).map(|i| i as f64 / 5.0).collect()
}

/// Ratios 0, 0.1, ..., 0.5.
pub fn incomplete_ratios() -> Vec<f64> {
    (0..=5).map(|i| i as f64 / 10.0).collect()
}

/// Edge retaining ratios 0.1, 0.2, ..., 1.0.
pub fn gamma_values() -> Vec<f64> {
    (1..=10).map(|i| i as f64 / 10.0).collect()
}

/// CV accuracy after dropping (or adding from empty) a ratio of edges.
/// The transform at ratio index `i` is seeded with `derive(seed, TRANSFORM, i)`.
pub fn run_perturbation(
    ds: &GraphDataset,
    mode: PerturbMode,
    ratios: &[f64],
    settings: &CvSettings,
) -> Result<SweepReport> {
    let prefix = match mode {
        PerturbMode::Drop => "drop",
        PerturbMode::AddFromEmpty => "add",
    };
    let points = ratios
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            let seed = derive(settings.seed, &[TAG_TRANSFORM, i as u64]);
            Ok((ratio_key(prefix, r), perturb_edges(ds, mode, r, seed)?, settings.base.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    sweep(&format!("perturb-{prefix}"), settings, points)
}

/// CV accuracy with a ratio of node attribute rows zeroed.
pub fn run_incomplete(ds: &GraphDataset, ratios: &[f64], settings: &CvSettings) -> Result<SweepReport> {
    let points = ratios
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            let seed = derive(settings.seed, &[TAG_TRANSFORM, i as u64]);
            Ok((ratio_key("incomplete", r), make_incomplete(ds, r, seed)?, settings.base.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    sweep("incomplete", settings, points)
}

/// CV accuracy for each edge retaining ratio.
pub fn run_gamma_sweep(ds: &GraphDataset, gammas: &[f64], settings: &CvSettings) -> Result<SweepReport> {
    let points = gammas
        .iter()
        .map(|&g| {
            let base = TrainSpec {
                gamma: g,
                ..settings.base.clone()
            };
            (ratio_key("gamma", g), ds.clone(), base)
        })
        .collect();
    sweep("gamma-sweep", settings, points)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionRun {
    pub seed: u64,
    pub best_epoch: usize,
    pub test_mae: f64,
    pub baseline_mae: f64,
    #[serde(skip)]
    pub history: Vec<EpochRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionReport {
    pub dataset: String,
    pub runs: Vec<RegressionRun>,
    pub mean_mae: f64,
    pub std_mae: f64,
    /// predicting the training-set mean target for every test graph
    pub mean_baseline_mae: f64,
    pub spec: TrainSpec,
    pub seed: u64,
    pub wall_clock_secs: f64,
}

impl RegressionReport {
    pub fn rows(&self) -> Vec<TableRow> {
        let model: Vec<f64> = self.runs.iter().map(|r| r.test_mae).collect();
        let base: Vec<f64> = self.runs.iter().map(|r| r.baseline_mae).collect();
        let (bm, bs) = mean_std(&base);
        let (mm, ms) = mean_std(&model);
        vec![
            TableRow {
                key: "regress-model".into(),
                mean: mm,
                std: ms,
                seed: self.seed,
            },
            TableRow {
                key: "regress-mean-baseline".into(),
                mean: bm,
                std: bs,
                seed: self.seed,
            },
        ]
    }
}

/// Learning rate and weight decay used for the regression runs.
pub fn regression_spec(base: &TrainSpec) -> TrainSpec {
    TrainSpec {
        lr: 0.001,
        weight_decay: 1e-4,
        plateau: Some(Plateau::default()),
        ..base.clone()
    }
}

/// `runs` independent 80/10/10 holdout runs (L1 loss, plateau learning-rate
/// halving). Run `i` splits with `derive(seed, SPLIT, i)` and trains with
/// `derive(seed, i)`.
pub fn run_regression(ds: &GraphDataset, spec: &TrainSpec, runs: usize, seed: u64, jobs: usize) -> Result<RegressionReport> {
    if ds.task.is_classification() {
        return Err(Error::Dataset(format!("{} is a classification dataset", ds.name)));
    }
    let start = Instant::now();
    let results = run_parallel(jobs, || {
        (0..runs as u64)
            .into_par_iter()
            .map(|i| {
                let split = holdout_split(ds.len(), derive(seed, &[TAG_SPLIT, i]))?;
                let run_spec = spec.with_seed(derive(seed, &[i]));
                let out = train_one(ds, &split.train_ids, &split.val_ids, &run_spec)?;
                let (_, test_mae) = evaluate_ids(&out.params, &out.config, ds, &split.test_ids)?;
                let train_mean = split.train_ids.iter().map(|&g| ds.graphs[g].target().value()).sum::<f64>()
                    / split.train_ids.len() as f64;
                let baseline_mae = split
                    .test_ids
                    .iter()
                    .map(|&g| (ds.graphs[g].target().value() - train_mean).abs())
                    .sum::<f64>()
                    / split.test_ids.len() as f64;
                Ok(RegressionRun {
                    seed: run_spec.seed,
                    best_epoch: out.best_epoch,
                    test_mae,
                    baseline_mae,
                    history: out.history,
                })
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let maes: Vec<f64> = results.iter().map(|r| r.test_mae).collect();
    let (mean_mae, std_mae) = mean_std(&maes);
    let mean_baseline_mae = results.iter().map(|r| r.baseline_mae).sum::<f64>() / results.len().max(1) as f64;
    Ok(RegressionReport {
        dataset: ds.name.clone(),
        runs: results,
        mean_mae,
        std_mae,
        mean_baseline_mae,
        spec: spec.clone(),
        seed,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}
