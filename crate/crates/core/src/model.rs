//! Full networks built from convolutions, two pooling stages and an MLP head.
//!
//! Classification: `GCN1 -> relu -> GCN2 -> relu -> Pool1 -> GCN3 -> relu ->
//! Pool2`, a `[mean || max]` readout after each pool, the two readouts
//! concatenated and fed through three linear layers.
//!
//! Regression: `GCN1 -> relu -> Pool1 -> GCN2 -> relu -> Pool2`, same readout
//! and head, one output.
//!
//! Pooling is per graph, so every slot of a batch is processed on its own
//! subgraph and the per-slot rows are stacked at the end.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::copool::{copool_forward, CoPoolConfig, CoPoolParams};
use crate::data::{Batch, Target, Task};
use crate::error::{shape_err, Error, Result};
use crate::layers::{readout, Adam, Adjacency, GcnLayer, Linear};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hidden: usize,
    pub dropout: f64,
    pub pool: CoPoolConfig,
    pub task: Task,
    pub attr_dim: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::Config("hidden size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.attr_dim == 0 {
            return Err(Error::Config(
                "attr_dim is 0; pad plain datasets before building a model".into(),
            ));
        }
        if let Task::Classification { num_classes } = self.task {
            if num_classes < 2 {
                return Err(Error::Config(format!("{num_classes} classes")));
            }
        }
        self.pool.validate()
    }

    pub fn outputs(&self) -> usize {
        match self.task {
            Task::Classification { num_classes } => num_classes,
            Task::Regression => 1,
        }
    }

    fn num_convs(&self) -> usize {
        if self.task.is_classification() {
            3
        } else {
            2
        }
    }

    /// Width of one readout: `[mean || max]` of the pooled features.
    fn readout_dim(&self) -> usize {
        2 * self.hidden
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<P> {
    pub convs: Vec<GcnLayer<P>>,
    pub pools: Vec<CoPoolParams<P>>,
    pub head: Vec<Linear<P>>,
}

impl<P> ModelParams<P> {
    pub fn map<Q>(&self, mut f: impl FnMut(&P) -> Q) -> ModelParams<Q> {
        ModelParams {
            convs: self.convs.iter().map(|c| GcnLayer { theta: f(&c.theta) }).collect(),
            pools: self.pools.iter().map(|p| p.map(&mut f)).collect(),
            head: self
                .head
                .iter()
                .map(|l| Linear {
                    weight: f(&l.weight),
                    bias: f(&l.bias),
                })
                .collect(),
        }
    }

    /// Every parameter in a fixed order (convs, pools, head).
    pub fn tensors(&self) -> Vec<&P> {
        let mut out: Vec<&P> = self.convs.iter().map(|c| &c.theta).collect();
        for p in &self.pools {
            out.extend(p.tensors());
        }
        for l in &self.head {
            out.push(&l.weight);
            out.push(&l.bias);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut P> {
        let mut out: Vec<&mut P> = self.convs.iter_mut().map(|c| &mut c.theta).collect();
        for p in &mut self.pools {
            out.extend(p.tensors_mut());
        }
        for l in &mut self.head {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out
    }

    /// Names matching [`tensors`](Self::tensors), used by checkpoints.
    pub fn names(&self) -> Vec<String> {
        let mut out: Vec<String> = (0..self.convs.len()).map(|i| format!("conv{i}.theta")).collect();
        for i in 0..self.pools.len() {
            for part in ["beta", "w_prox", "a", "w_fuse"] {
                out.push(format!("pool{i}.{part}"));
            }
        }
        for i in 0..self.head.len() {
            out.push(format!("lin{i}.weight"));
            out.push(format!("lin{i}.bias"));
        }
        out
    }
}

impl<T: Scalar> ModelParams<Tensor<T>> {
    pub fn new<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let h = config.hidden;
        let convs = (0..config.num_convs())
            .map(|i| GcnLayer::new(if i == 0 { config.attr_dim } else { h }, h, rng))
            .collect();
        let pools = (0..2).map(|_| CoPoolParams::new(h, h, h, &config.pool, rng)).collect();
        let mid = (h / 2).max(1);
        let head = vec![
            Linear::new(2 * config.readout_dim(), h, rng),
            Linear::new(h, mid, rng),
            Linear::new(mid, config.outputs(), rng),
        ];
        Ok(ModelParams { convs, pools, head })
    }

    pub fn num_values(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.all_finite())
    }

    /// Registers every parameter as a differentiable leaf.
    pub fn leaves(&self, tape: &mut Tape<T>) -> ModelParams<Var> {
        self.map(|t| tape.leaf(t.clone()))
    }

    /// Registers every parameter as a constant (evaluation).
    pub fn constants(&self, tape: &mut Tape<T>) -> ModelParams<Var> {
        self.map(|t| tape.constant(t.clone()))
    }
}

/// What the pooling stages selected for one slot.
#[derive(Clone, Debug, PartialEq)]
pub struct StageTrace {
    pub indices: Vec<usize>,
    pub retained: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ForwardTrace {
    /// `slots[s][stage]`
    pub slots: Vec<Vec<StageTrace>>,
    /// smallest ranking margin seen in any pooling stage
    pub margin: f64,
}

/// Runs the network on every slot of `batch` and returns `slots x outputs`.
///
/// `dropout_rng` switches on training mode (dropout between head layers).
pub fn forward<T: Scalar, R: Rng + ?Sized>(
    tape: &mut Tape<T>,
    params: &ModelParams<Var>,
    config: &ModelConfig,
    batch: &Batch,
    mut dropout_rng: Option<&mut R>,
) -> Result<(Var, ForwardTrace)> {
    if batch.attr_dim() != config.attr_dim {
        return Err(shape_err(
            "forward",
            format!("batch attr_dim {}, model expects {}", batch.attr_dim(), config.attr_dim),
        ));
    }
    let mut trace = ForwardTrace {
        slots: Vec::with_capacity(batch.num_slots()),
        margin: f64::INFINITY,
    };
    let mut rows = Vec::with_capacity(batch.num_slots());
    for s in 0..batch.num_slots() {
        let x = tape.constant(batch.slot_attrs(s).cast());
        let adj = Adjacency::binary(batch.slots[s].len(), batch.slot_edges(s));
        let (row, stages, margin) = embed_graph(tape, params, config, x, adj)?;
        trace.slots.push(stages);
        trace.margin = trace.margin.min(margin);
        rows.push(row);
    }
    let mut z = if rows.len() == 1 {
        rows[0]
    } else {
        tape.concat_rows(&rows)?
    };
    let last = params.head.len() - 1;
    for (i, lin) in params.head.iter().enumerate() {
        z = lin.forward(tape, z)?;
        if i < last {
            z = tape.relu(z);
            if let Some(r) = dropout_rng.as_deref_mut() {
                if config.dropout > 0.0 {
                    z = tape.dropout(z, config.dropout, r)?;
                }
            }
        }
    }
    Ok((z, trace))
}

/// Convolutions and pooling for one graph; returns the concatenated readouts
/// (1 x 4h).
fn embed_graph<T: Scalar>(
    tape: &mut Tape<T>,
    params: &ModelParams<Var>,
    config: &ModelConfig,
    x: Var,
    adj: Adjacency,
) -> Result<(Var, Vec<StageTrace>, f64)> {
    let mut h = x;
    let mut adj = adj;
    let mut stages = Vec::with_capacity(2);
    let mut readouts = Vec::with_capacity(2);
    let mut margin = f64::INFINITY;
    let pre_pool_convs = if config.task.is_classification() { 2 } else { 1 };
    let mut conv = params.convs.iter();

    for (stage, pool) in params.pools.iter().enumerate() {
        let convs_here = if stage == 0 { pre_pool_convs } else { 1 };
        for layer in conv.by_ref().take(convs_here) {
            h = layer.forward(tape, h, &adj)?;
            h = tape.relu(h);
        }
        let out = copool_forward(tape, h, &adj, pool, &config.pool)?;
        margin = margin.min(out.margin);
        stages.push(StageTrace {
            indices: out.indices.clone(),
            retained: out.retained.clone(),
        });
        h = out.z;
        adj = out.adj;
        let membership = vec![0; adj.n];
        readouts.push(readout(tape, h, &membership)?);
    }
    Ok((tape.concat_cols(&readouts)?, stages, margin))
}

/// Classification logits (`slots x C`).
pub fn classify_forward<T: Scalar, R: Rng + ?Sized>(
    tape: &mut Tape<T>,
    params: &ModelParams<Var>,
    config: &ModelConfig,
    batch: &Batch,
    dropout_rng: Option<&mut R>,
) -> Result<Var> {
    if !config.task.is_classification() {
        return Err(Error::Config("classify_forward on a regression model".into()));
    }
    forward(tape, params, config, batch, dropout_rng).map(|(v, _)| v)
}

/// Regression predictions (`slots x 1`).
pub fn regress_forward<T: Scalar, R: Rng + ?Sized>(
    tape: &mut Tape<T>,
    params: &ModelParams<Var>,
    config: &ModelConfig,
    batch: &Batch,
    dropout_rng: Option<&mut R>,
) -> Result<Var> {
    if config.task.is_classification() {
        return Err(Error::Config("regress_forward on a classification model".into()));
    }
    forward(tape, params, config, batch, dropout_rng).map(|(v, _)| v)
}

/// Mean NLL of the log-softmax (classification) or mean absolute error.
pub fn loss<T: Scalar>(tape: &mut Tape<T>, outputs: Var, targets: &[Target], task: Task) -> Result<Var> {
    match task {
        Task::Classification { num_classes } => {
            let classes = targets
                .iter()
                .map(|t| match t.class() {
                    Some(c) if c < num_classes => Ok(c),
                    _ => Err(Error::InvalidArgument(format!(
                        "target {t:?} outside {num_classes} classes"
                    ))),
                })
                .collect::<Result<Vec<_>>>()?;
            let logp = tape.log_softmax(outputs);
            tape.nll(logp, &classes)
        }
        Task::Regression => {
            let y = Tensor::from_vec(
                targets.len(),
                1,
                targets.iter().map(|t| T::of(t.value())).collect(),
            )?;
            let y = tape.constant(y);
            tape.l1(outputs, y)
        }
    }
}

/// Eval-mode outputs, no gradient bookkeeping.
pub fn predict<T: Scalar>(params: &ModelParams<Tensor<T>>, config: &ModelConfig, batch: &Batch) -> Result<Tensor<T>> {
    let mut tape = Tape::new();
    let p = params.constants(&mut tape);
    let (out, _) = forward::<T, rand_chacha::ChaCha8Rng>(&mut tape, &p, config, batch, None)?;
    Ok(tape.value(out).clone())
}

/// Loss and outputs of one batch in eval mode.
pub fn evaluate<T: Scalar>(
    params: &ModelParams<Tensor<T>>,
    config: &ModelConfig,
    batch: &Batch,
) -> Result<(f64, Tensor<T>)> {
    let mut tape = Tape::new();
    let p = params.constants(&mut tape);
    let (out, _) = forward::<T, rand_chacha::ChaCha8Rng>(&mut tape, &p, config, batch, None)?;
    let l = loss(&mut tape, out, &batch.targets, config.task)?;
    Ok((tape.value(l).item().as_f64(), tape.value(out).clone()))
}

/// One optimisation step on `batch`; returns the training loss before the
/// update.
pub fn train_step<T: Scalar, R: Rng + ?Sized>(
    params: &mut ModelParams<Tensor<T>>,
    config: &ModelConfig,
    batch: &Batch,
    adam: &mut Adam<T>,
    rng: &mut R,
) -> Result<f64> {
    let mut tape = Tape::new();
    let vars = params.leaves(&mut tape);
    let (out, _) = forward(&mut tape, &vars, config, batch, Some(rng))?;
    let l = loss(&mut tape, out, &batch.targets, config.task)?;
    let value = tape.value(l).item().as_f64();
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("training loss {value}")));
    }
    let mut grads = tape.backward(l)?;
    let g: Vec<Tensor<T>> = vars.tensors().iter().map(|&&v| grads.take(v)).collect();
    adam.step(&mut params.tensors_mut(), &g)?;
    Ok(value)
}

const CHECKPOINT_MAGIC: &str = "copool-checkpoint v1";

/// Text checkpoint: a magic line, the config as JSON, then one header line
/// (`name rows cols`) and one line of hex-encoded `f64` bit patterns per
/// parameter.
pub fn checkpoint_to_string<T: Scalar>(params: &ModelParams<Tensor<T>>, config: &ModelConfig) -> Result<String> {
    let mut out = String::new();
    writeln!(out, "{CHECKPOINT_MAGIC}").unwrap();
    writeln!(out, "{}", serde_json::to_string(config)?).unwrap();
    for (name, t) in params.names().iter().zip(params.tensors()) {
        writeln!(out, "{name} {} {}", t.rows(), t.cols()).unwrap();
        let hex: Vec<String> = t.data().iter().map(|v| format!("{:016x}", v.as_f64().to_bits())).collect();
        writeln!(out, "{}", hex.join(" ")).unwrap();
    }
    Ok(out)
}

pub fn checkpoint_from_str<T: Scalar>(text: &str) -> Result<(ModelParams<Tensor<T>>, ModelConfig)> {
    let bad = |msg: String| Error::Checkpoint(msg);
    let mut lines = text.lines();
    if lines.next() != Some(CHECKPOINT_MAGIC) {
        return Err(bad("missing header line".into()));
    }
    let config: ModelConfig = serde_json::from_str(lines.next().ok_or_else(|| bad("missing config".into()))?)?;
    let mut rng = crate::rng::rng(0);
    let mut params = ModelParams::<Tensor<T>>::new(&config, &mut rng)?;
    let names = params.names();
    for (name, slot) in names.iter().zip(params.tensors_mut()) {
        let header = lines.next().ok_or_else(|| bad(format!("missing tensor {name}")))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let shape = match fields.as_slice() {
            [n, r, c] if n == name => (
                r.parse::<usize>().map_err(|e| bad(format!("{name}: {e}")))?,
                c.parse::<usize>().map_err(|e| bad(format!("{name}: {e}")))?,
            ),
            _ => return Err(bad(format!("expected header for {name}, found {header:?}"))),
        };
        if shape != slot.shape() {
            return Err(bad(format!("{name}: shape {shape:?}, config implies {:?}", slot.shape())));
        }
        let body = lines.next().ok_or_else(|| bad(format!("missing values for {name}")))?;
        let values = body
            .split_whitespace()
            .map(|h| {
                u64::from_str_radix(h, 16)
                    .map(|b| T::of(f64::from_bits(b)))
                    .map_err(|e| bad(format!("{name}: {e}")))
            })
            .collect::<Result<Vec<T>>>()?;
        *slot = Tensor::from_vec(shape.0, shape.1, values).map_err(|e| bad(format!("{name}: {e}")))?;
    }
    if lines.any(|l| !l.trim().is_empty()) {
        return Err(bad("trailing content".into()));
    }
    Ok((params, config))
}

pub fn save_checkpoint<T: Scalar>(path: &Path, params: &ModelParams<Tensor<T>>, config: &ModelConfig) -> Result<()> {
    std::fs::write(path, checkpoint_to_string(params, config)?)?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<(ModelParams<Tensor<T>>, ModelConfig)> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    checkpoint_from_str(&std::fs::read_to_string(path)?)
}
