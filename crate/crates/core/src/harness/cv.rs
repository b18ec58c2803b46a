use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::train::{metric_better, train_one, EpochRow, TrainSpec};
use super::{mean_std, run_parallel};
use crate::data::{stratified_kfold, FoldSplit, GraphDataset};
use crate::error::Result;
use crate::harness::train::evaluate_ids;
use crate::rng::{derive, TAG_FOLD};

/// Hyperparameter grid; every list must be nonempty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lr: Vec<f64>,
    pub weight_decay: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub hidden: Vec<usize>,
    pub dropout: Vec<f64>,
}

impl Grid {
    pub fn full() -> Self {
        Grid {
            lr: vec![0.005, 0.0005, 0.001],
            weight_decay: vec![0.0001, 0.001],
            epsilon: vec![0.5, 0.25],
            hidden: vec![128, 64],
            dropout: vec![0.0, 0.5],
        }
    }

    /// Reduced grid: learning rate 0.001, hidden size 64.
    pub fn fast() -> Self {
        Grid {
            lr: vec![0.001],
            hidden: vec![64],
            ..Grid::full()
        }
    }

    /// Grid holding exactly the values of `spec`.
    pub fn single(spec: &TrainSpec) -> Self {
        Grid {
            lr: vec![spec.lr],
            weight_decay: vec![spec.weight_decay],
            epsilon: vec![spec.epsilon],
            hidden: vec![spec.hidden],
            dropout: vec![spec.dropout],
        }
    }

    pub fn len(&self) -> usize {
        self.lr.len() * self.weight_decay.len() * self.epsilon.len() * self.hidden.len() * self.dropout.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cartesian product over the grid, everything else copied from `base`.
    /// Order: lr outermost, dropout innermost.
    pub fn specs(&self, base: &TrainSpec) -> Vec<TrainSpec> {
        let mut out = Vec::with_capacity(self.len());
        for &lr in &self.lr {
            for &weight_decay in &self.weight_decay {
                for &epsilon in &self.epsilon {
                    for &hidden in &self.hidden {
                        for &dropout in &self.dropout {
                            out.push(TrainSpec {
                                lr,
                                weight_decay,
                                epsilon,
                                hidden,
                                dropout,
                                ..base.clone()
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub best_epoch: usize,
    pub val_loss: f64,
    pub val_metric: f64,
    pub test_metric: f64,
    #[serde(skip)]
    pub history: Vec<EpochRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub spec: TrainSpec,
    pub mean_val_metric: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CVReport {
    pub dataset: String,
    pub metric: String,
    pub folds: Vec<FoldResult>,
    pub mean: f64,
    /// sample standard deviation over the folds
    pub std: f64,
    pub spec: TrainSpec,
    pub grid: Vec<GridPoint>,
    pub seed: u64,
    pub wall_clock_secs: f64,
}

/// Trains on one fold and scores the test ids.
pub fn run_fold(ds: &GraphDataset, split: &FoldSplit, spec: &TrainSpec) -> Result<FoldResult> {
    let out = train_one(ds, &split.train_ids, &split.val_ids, spec)?;
    let (_, test_metric) = evaluate_ids(&out.params, &out.config, ds, &split.test_ids)?;
    Ok(FoldResult {
        fold: split.fold_index,
        best_epoch: out.best_epoch,
        val_loss: out.best_val_loss,
        val_metric: out.best_val_metric,
        test_metric,
        history: out.history,
    })
}

/// k-fold cross-validation of every grid point.
///
/// Folds come from `stratified_kfold(ds, k, seed)`; fold `f` trains with seed
/// `derive(seed, FOLD, f)` for every grid point, so grid points differ only
/// in their hyperparameters. The point with the best mean validation metric
/// wins (first one on ties) and its test metrics form the report.
pub fn grid_search_cv(
    ds: &GraphDataset,
    grid: &Grid,
    base: &TrainSpec,
    k: usize,
    seed: u64,
    jobs: usize,
) -> Result<CVReport> {
    let start = Instant::now();
    let specs = grid.specs(base);
    if specs.is_empty() {
        return Err(crate::Error::Config("empty hyperparameter grid".into()));
    }
    let splits = stratified_kfold(ds, k, seed)?;
    let tasks: Vec<(usize, usize)> = (0..specs.len())
        .flat_map(|s| (0..splits.len()).map(move |f| (s, f)))
        .collect();
    let results: Vec<FoldResult> = run_parallel(jobs, || {
        tasks
            .par_iter()
            .map(|&(s, f)| run_fold(ds, &splits[f], &specs[s].with_seed(derive(seed, &[TAG_FOLD, f as u64]))))
            .collect::<Result<Vec<_>>>()
    })??;

    let mut per_spec: Vec<Vec<FoldResult>> = vec![Vec::with_capacity(k); specs.len()];
    for (&(s, _), r) in tasks.iter().zip(results) {
        per_spec[s].push(r);
    }
    let grid_points: Vec<GridPoint> = specs
        .iter()
        .zip(&per_spec)
        .map(|(spec, folds)| GridPoint {
            spec: spec.clone(),
            mean_val_metric: folds.iter().map(|f| f.val_metric).sum::<f64>() / folds.len() as f64,
        })
        .collect();
    let mut winner = 0;
    for (i, g) in grid_points.iter().enumerate().skip(1) {
        if metric_better(ds.task, g.mean_val_metric, grid_points[winner].mean_val_metric) {
            winner = i;
        }
    }
    let folds = per_spec.swap_remove(winner);
    let tests: Vec<f64> = folds.iter().map(|f| f.test_metric).collect();
    let (mean, std) = mean_std(&tests);
    Ok(CVReport {
        dataset: ds.name.clone(),
        metric: super::train::metric_name(ds.task).to_string(),
        folds,
        mean,
        std,
        spec: specs[winner].clone(),
        grid: grid_points,
        seed,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}
