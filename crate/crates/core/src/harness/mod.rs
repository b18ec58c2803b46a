//! Training loop, cross-validation with grid search, and experiment drivers.

mod cv;
mod experiments;
mod train;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use cv::{grid_search_cv, run_fold, CVReport, FoldResult, Grid, GridPoint};
pub use experiments::{
    gamma_values, incomplete_ratios, perturbation_ratios, ratio_key, regression_spec, run_gamma_sweep,
    run_incomplete, run_perturbation, run_regression, CvSettings, RegressionReport, RegressionRun, SweepReport,
};
pub use train::{
    argmax, evaluate_ids, metric_better, metric_name, train_one, EpochRow, Plateau, TrainOutcome, TrainSpec,
};

use crate::data::{pad_plain_attributes, parse_tu_dataset, synthetic, AttrKind, GraphDataset};
use crate::error::{Error, Result};

/// One line of `table.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub key: String,
    pub mean: f64,
    pub std: f64,
    pub seed: u64,
}

/// Mean and sample standard deviation (`n - 1` denominator; 0 for a single
/// value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

/// Runs `f` on a dedicated pool of `jobs` threads (at least one).
pub(crate) fn run_parallel<R: Send>(jobs: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Default number of graphs for the generated datasets.
pub const SYNTH_DEFAULT_GRAPHS: usize = 1000;

/// Loads `name`.
///
/// `SYNTH-REG` and `SYNTH-CLS` (optionally `SYNTH-REG:500` for a graph count)
/// are generated in memory with a fixed seed of 0; anything else is read as a
/// TU dataset from `data_root`. Plain datasets are padded with all-one
/// attributes of width `pad_dim`.
pub fn load_dataset(name: &str, data_root: Option<&Path>, pad_dim: usize) -> Result<GraphDataset> {
    let (base, count) = match name.split_once(':') {
        Some((b, c)) => (
            b,
            Some(
                c.parse::<usize>()
                    .map_err(|_| Error::Config(format!("bad graph count in dataset name {name:?}")))?,
            ),
        ),
        None => (name, None),
    };
    let ds = match base {
        "SYNTH-REG" => synthetic::regression(count.unwrap_or(SYNTH_DEFAULT_GRAPHS), 0)?,
        "SYNTH-CLS" => synthetic::classification(count.unwrap_or(SYNTH_DEFAULT_GRAPHS), 0)?,
        _ => {
            if count.is_some() {
                return Err(Error::Config(format!("graph count suffix only applies to SYNTH-* datasets: {name}")));
            }
            let root = data_root
                .ok_or_else(|| Error::Config(format!("dataset {name} needs --data-root")))?;
            parse_tu_dataset(root, name)?
        }
    };
    if ds.attr_kind == AttrKind::Plain {
        return pad_plain_attributes(&ds, pad_dim);
    }
    Ok(ds)
}

/// Statistics printed by `inspect`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub name: String,
    pub graphs: usize,
    pub classes: Option<usize>,
    pub mean_nodes: f64,
    pub mean_edges: f64,
    pub attr_kind: AttrKind,
    pub attr_dim: usize,
}

impl DatasetStats {
    pub fn of(ds: &GraphDataset) -> Self {
        DatasetStats {
            name: ds.name.clone(),
            graphs: ds.len(),
            classes: ds.num_classes(),
            mean_nodes: ds.mean_nodes(),
            mean_edges: ds.mean_edges(),
            attr_kind: ds.attr_kind,
            attr_dim: ds.attr_dim,
        }
    }
}

/// Result directory layout: `report.json`, `table.csv`, `history/*.csv`,
/// `config_echo.json`.
#[derive(Clone, Debug)]
pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(root.join("history"))?;
        Ok(OutputDir { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write_json<S: Serialize>(&self, file: &str, value: &S) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(self.root.join(file), text)?;
        Ok(())
    }

    pub fn write_table(&self, rows: &[TableRow]) -> Result<()> {
        fs::write(self.root.join("table.csv"), table_csv(rows))?;
        Ok(())
    }

    pub fn write_history(&self, name: &str, rows: &[EpochRow]) -> Result<()> {
        fs::write(self.root.join("history").join(format!("{name}.csv")), history_csv(rows))?;
        Ok(())
    }
}

pub fn table_csv(rows: &[TableRow]) -> String {
    let mut out = String::from("key,mean,std,seed\n");
    for r in rows {
        writeln!(out, "{},{},{},{}", r.key, r.mean, r.std, r.seed).unwrap();
    }
    out
}

pub fn history_csv(rows: &[EpochRow]) -> String {
    let mut out = String::from("epoch,train_loss,val_loss,val_metric\n");
    for r in rows {
        writeln!(out, "{},{},{},{}", r.epoch, r.train_loss, r.val_loss, r.val_metric).unwrap();
    }
    out
}

#[cfg(test)]
mod tests;
