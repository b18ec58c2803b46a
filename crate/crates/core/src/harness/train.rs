use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::copool::{CoPoolConfig, PoolMode};
use crate::data::{batch_graphs, Graph, GraphDataset, Task};
use crate::error::{Error, Result};
use crate::layers::Adam;
use crate::model::{evaluate, train_step, ModelConfig, ModelParams};
use crate::rng::{derived_rng, TAG_INIT, TAG_TRAIN};
use crate::{Real, Tensor};

/// Halve the learning rate after `patience` epochs without a validation-loss
/// improvement, never going below `min_lr`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    pub factor: f64,
    pub patience: usize,
    pub min_lr: f64,
}

impl Default for Plateau {
    fn default() -> Self {
        Plateau {
            factor: 0.5,
            patience: 10,
            min_lr: 1e-5,
        }
    }
}

/// Everything needed to train one model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSpec {
    pub lr: f64,
    pub weight_decay: f64,
    pub epsilon: f64,
    pub hidden: usize,
    pub dropout: f64,
    pub gamma: f64,
    pub gpr_steps: usize,
    pub mode: PoolMode,
    pub double_self_loop: bool,
    pub max_epochs: usize,
    pub patience: usize,
    /// graphs per mini-batch; 0 trains on the whole training set at once
    pub batch_size: usize,
    pub plateau: Option<Plateau>,
    pub seed: u64,
}

impl Default for TrainSpec {
    fn default() -> Self {
        let pool = CoPoolConfig::default();
        TrainSpec {
            lr: 0.001,
            weight_decay: 1e-4,
            epsilon: pool.epsilon,
            hidden: 64,
            dropout: 0.0,
            gamma: pool.gamma,
            gpr_steps: pool.gpr_steps,
            mode: pool.mode,
            double_self_loop: pool.double_self_loop,
            max_epochs: 300,
            patience: 50,
            batch_size: 32,
            plateau: None,
            seed: 0,
        }
    }
}

impl TrainSpec {
    pub fn pool_config(&self) -> CoPoolConfig {
        CoPoolConfig {
            gamma: self.gamma,
            epsilon: self.epsilon,
            gpr_steps: self.gpr_steps,
            mode: self.mode,
            double_self_loop: self.double_self_loop,
        }
    }

    pub fn model_config(&self, ds: &GraphDataset) -> ModelConfig {
        ModelConfig {
            hidden: self.hidden,
            dropout: self.dropout,
            pool: self.pool_config(),
            task: ds.task,
            attr_dim: ds.attr_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!("learning rate {} is negative", self.lr)));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config(format!("weight decay {} is negative", self.weight_decay)));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        self.pool_config().validate()
    }

    pub fn with_seed(&self, seed: u64) -> TrainSpec {
        TrainSpec {
            seed,
            ..self.clone()
        }
    }

    fn echo(&self) -> String {
        serde_json::to_string(self).unwrap_or_else(|_| format!("{self:?}"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_metric: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// parameters from the best validation-loss epoch
    pub params: ModelParams<Tensor>,
    pub config: ModelConfig,
    pub history: Vec<EpochRow>,
    /// 1-based epoch the parameters come from
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub best_val_metric: f64,
}

/// Accuracy for classification, mean absolute error for regression.
pub fn metric_name(task: Task) -> &'static str {
    if task.is_classification() {
        "accuracy"
    } else {
        "mae"
    }
}

/// True when metric `a` is strictly better than `b` for this task.
pub fn metric_better(task: Task, a: f64, b: f64) -> bool {
    if task.is_classification() {
        a > b
    } else {
        a < b
    }
}

const EVAL_CHUNK: usize = 64;

/// Mean loss and metric over `ids`, in eval mode.
pub fn evaluate_ids(
    params: &ModelParams<Tensor>,
    config: &ModelConfig,
    ds: &GraphDataset,
    ids: &[usize],
) -> Result<(f64, f64)> {
    if ids.is_empty() {
        return Err(Error::InvalidArgument("evaluation on an empty id list".into()));
    }
    let mut loss_sum = 0.0;
    let mut metric_sum = 0.0;
    for chunk in ids.chunks(EVAL_CHUNK) {
        let graphs: Vec<&Graph> = chunk.iter().map(|&i| &ds.graphs[i]).collect();
        let batch = batch_graphs(&graphs)?;
        let (loss, out) = evaluate(params, config, &batch)?;
        loss_sum += loss * chunk.len() as f64;
        for (s, t) in batch.targets.iter().enumerate() {
            let row = out.row(s);
            metric_sum += match config.task {
                Task::Classification { .. } => {
                    let pred = argmax(row);
                    f64::from(u8::from(Some(pred) == t.class()))
                }
                Task::Regression => (row[0] - t.value()).abs(),
            };
        }
    }
    let n = ids.len() as f64;
    Ok((loss_sum / n, metric_sum / n))
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax(row: &[Real]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Trains on `train_ids` with early stopping on the loss over `val_ids`.
///
/// Parameters are initialised from `derive(spec.seed, INIT)` and batches are
/// shuffled from `derive(spec.seed, TRAIN)`. Training stops once `patience`
/// epochs pass without a strictly lower validation loss, or at
/// `max_epochs`; the parameters of the best epoch are returned.
pub fn train_one(ds: &GraphDataset, train_ids: &[usize], val_ids: &[usize], spec: &TrainSpec) -> Result<TrainOutcome> {
    spec.validate()?;
    if train_ids.is_empty() || val_ids.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "train_one needs nonempty splits (train {}, val {})",
            train_ids.len(),
            val_ids.len()
        )));
    }
    let config = spec.model_config(ds);
    let mut init_rng = derived_rng(spec.seed, &[TAG_INIT]);
    let mut params = ModelParams::<Tensor>::new(&config, &mut init_rng)?;
    let mut rng = derived_rng(spec.seed, &[TAG_TRAIN]);
    let mut adam = Adam::<Real>::new(spec.lr, spec.weight_decay);

    let mut order = train_ids.to_vec();
    let batch_size = if spec.batch_size == 0 {
        order.len()
    } else {
        spec.batch_size
    };
    let mut history = Vec::new();
    let mut best = (f64::INFINITY, f64::NAN, 0, params.clone());
    let mut since_decay = 0;
    let fail = |e: Error, epoch: usize| match e {
        Error::NonFinite(msg) => Error::NonFinite(format!("{msg} at epoch {epoch}; spec {}", spec.echo())),
        other => other,
    };

    for epoch in 1..=spec.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(batch_size) {
            let graphs: Vec<&Graph> = chunk.iter().map(|&i| &ds.graphs[i]).collect();
            let batch = batch_graphs(&graphs)?;
            let l = train_step(&mut params, &config, &batch, &mut adam, &mut rng).map_err(|e| fail(e, epoch))?;
            loss_sum += l * chunk.len() as f64;
        }
        let train_loss = loss_sum / order.len() as f64;
        let (val_loss, val_metric) = evaluate_ids(&params, &config, ds, val_ids)?;
        if !val_loss.is_finite() {
            return Err(fail(Error::NonFinite(format!("validation loss {val_loss}")), epoch));
        }
        history.push(EpochRow {
            epoch,
            train_loss,
            val_loss,
            val_metric,
        });
        if val_loss < best.0 {
            best = (val_loss, val_metric, epoch, params.clone());
            since_decay = 0;
        } else {
            since_decay += 1;
            if let Some(p) = spec.plateau {
                if since_decay >= p.patience && adam.lr > p.min_lr {
                    adam.lr = (adam.lr * p.factor).max(p.min_lr);
                    since_decay = 0;
                }
            }
        }
        if epoch - best.2 >= spec.patience {
            break;
        }
    }
    let (best_val_loss, best_val_metric, best_epoch, params) = best;
    Ok(TrainOutcome {
        params,
        config,
        history,
        best_epoch,
        best_val_loss,
        best_val_metric,
    })
}
