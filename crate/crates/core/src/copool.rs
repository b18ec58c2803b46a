//! Cross-view graph pooling.
//!
//! Edge view: node embeddings are smoothed by a learnable multi-hop
//! propagation, every edge gets a sigmoid proximity weight, the weights are
//! symmetrised and only the strongest `ceil(gamma * |E|)` edges are kept.
//!
//! Node view: the cut proximity matrix propagates the embeddings once more to
//! score nodes and the top `ceil(n * epsilon)` survive.
//!
//! The views meet in the fusion step, where the selected rows of the cut
//! proximity matrix aggregate the propagated embeddings and are concatenated
//! with the selected raw embeddings before a final linear map.

use std::cmp::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::layers::{glorot, sym_norm, Adjacency};
use crate::ratio::ceil_count;
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoolMode {
    #[default]
    Full,
    /// skip the multi-hop propagation: `O = H`
    NoGpr,
    /// keep every node; output is the edge-view aggregation only
    NoNodeView,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoPoolConfig {
    /// edge retaining ratio, in (0, 1]
    pub gamma: f64,
    /// node pooling ratio, in (0, 1]
    pub epsilon: f64,
    /// propagation steps T; the propagation weights have T + 1 entries
    pub gpr_steps: usize,
    pub mode: PoolMode,
    /// Add the identity again before scoring nodes, on top of the unit
    /// diagonal the cut matrix already carries (diagonal weight 2).
    pub double_self_loop: bool,
}

impl Default for CoPoolConfig {
    fn default() -> Self {
        CoPoolConfig {
            gamma: 1.0,
            epsilon: 0.5,
            gpr_steps: 3,
            mode: PoolMode::Full,
            double_self_loop: true,
        }
    }
}

impl CoPoolConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!("gamma {} outside (0, 1]", self.gamma)));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::Config(format!(
                "epsilon {} outside (0, 1]",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Learnable pieces of one pooling layer.
#[derive(Clone, Debug, PartialEq)]
pub struct CoPoolParams<P> {
    /// propagation weights, (T + 1) x 1
    pub beta: P,
    /// f x f' projection applied before proximity scoring
    pub w_prox: P,
    /// 2f' x 1 proximity scorer
    pub a: P,
    /// fusion map: 2f x out (f x out without the node view)
    pub w_fuse: P,
}

impl<P> CoPoolParams<P> {
    pub fn map<Q>(&self, mut f: impl FnMut(&P) -> Q) -> CoPoolParams<Q> {
        CoPoolParams {
            beta: f(&self.beta),
            w_prox: f(&self.w_prox),
            a: f(&self.a),
            w_fuse: f(&self.w_fuse),
        }
    }

    pub fn tensors(&self) -> [&P; 4] {
        [&self.beta, &self.w_prox, &self.a, &self.w_fuse]
    }

    pub fn tensors_mut(&mut self) -> [&mut P; 4] {
        [&mut self.beta, &mut self.w_prox, &mut self.a, &mut self.w_fuse]
    }
}

impl<T: Scalar> CoPoolParams<Tensor<T>> {
    /// Uniform propagation weights `1 / (T + 1)`, Glorot-uniform elsewhere.
    pub fn new<R: Rng + ?Sized>(
        in_dim: usize,
        prox_dim: usize,
        out_dim: usize,
        config: &CoPoolConfig,
        rng: &mut R,
    ) -> Self {
        let steps = config.gpr_steps + 1;
        let fuse_in = match config.mode {
            PoolMode::NoNodeView => in_dim,
            _ => 2 * in_dim,
        };
        CoPoolParams {
            beta: Tensor::full(steps, 1, T::of(1.0 / steps as f64)),
            w_prox: glorot(in_dim, prox_dim, rng),
            a: glorot(2 * prox_dim, 1, rng),
            w_fuse: glorot(fuse_in, out_dim, rng),
        }
    }
}

/// `O = sum_t beta_t H^t`, `H^0 = H`, `H^t = prop H^{t-1}`.
///
/// `prop` is the normalised self-looped adjacency, `beta` a (T + 1) x 1 var.
pub fn gpr_propagate<T: Scalar>(tape: &mut Tape<T>, h: Var, prop: Var, beta: Var) -> Result<Var> {
    let (steps, c) = tape.shape(beta);
    if c != 1 || steps == 0 {
        return Err(shape_err(
            "gpr_propagate",
            format!("beta is {steps}x{c}, expected (T+1)x1"),
        ));
    }
    let mut term = h;
    let b0 = tape.select_rows(beta, &[0])?;
    let mut out = tape.scale_by(term, b0)?;
    for t in 1..steps {
        term = tape.matmul(prop, term)?;
        let bt = tape.select_rows(beta, &[t])?;
        let scaled = tape.scale_by(term, bt)?;
        out = tape.add(out, scaled)?;
    }
    Ok(out)
}

/// Edge-masked sigmoid proximities:
/// `P_ij = sigmoid(a^T [O_i W || O_j W])` where `(i, j)` is an edge (either
/// orientation), `0` elsewhere including the diagonal.
pub fn proximity_weights<T: Scalar>(
    tape: &mut Tape<T>,
    o: Var,
    n: usize,
    edges: &[(usize, usize)],
    a: Var,
    w_prox: Var,
) -> Result<Var> {
    let (ar, ac) = tape.shape(a);
    let prox_dim = tape.shape(w_prox).1;
    if ac != 1 || ar != 2 * prox_dim {
        return Err(shape_err(
            "proximity_weights",
            format!("a is {ar}x{ac}, expected {}x1", 2 * prox_dim),
        ));
    }
    if tape.shape(o).0 != n {
        return Err(shape_err(
            "proximity_weights",
            format!("{} embedding rows for {n} nodes", tape.shape(o).0),
        ));
    }
    let projected = tape.matmul(o, w_prox)?;
    let first: Vec<usize> = (0..prox_dim).collect();
    let second: Vec<usize> = (prox_dim..2 * prox_dim).collect();
    let a_src = tape.select_rows(a, &first)?;
    let a_dst = tape.select_rows(a, &second)?;
    let src = tape.matmul(projected, a_src)?;
    let dst = tape.matmul(projected, a_dst)?;
    // logits_ij = src_i + dst_j
    let ones_row = tape.constant(Tensor::ones(1, n));
    let ones_col = tape.constant(Tensor::ones(n, 1));
    let src_b = tape.matmul(src, ones_row)?;
    let dst_t = tape.transpose(dst);
    let dst_b = tape.matmul(ones_col, dst_t)?;
    let logits = tape.add(src_b, dst_b)?;
    let s = tape.sigmoid(logits);
    let mask = tape.constant(crate::layers::dense_adjacency(n, edges));
    tape.mul(s, mask)
}

/// `P_sym = (P + I + (P + I)^T) / 2`.
pub fn symmetrize_proximity<T: Scalar>(tape: &mut Tape<T>, p: Var) -> Result<Var> {
    let (n, m) = tape.shape(p);
    if n != m {
        return Err(shape_err("symmetrize_proximity", format!("{n}x{m} not square")));
    }
    let eye = tape.constant(Tensor::eye(n));
    let p_hat = tape.add(p, eye)?;
    let p_hat_t = tape.transpose(p_hat);
    let both = tape.add(p_hat, p_hat_t)?;
    Ok(tape.scale(both, T::of(0.5)))
}

/// Edges surviving the top-gamma cut, sorted ascending.
///
/// Keeps the `ceil(gamma * |E|)` original edges with the largest symmetric
/// weight; equal weights go to the lexicographically smaller pair.
pub fn top_gamma_survivors<T: Scalar>(
    p_sym: &Tensor<T>,
    gamma: f64,
    edges: &[(usize, usize)],
) -> Vec<(usize, usize)> {
    let keep = ceil_count(gamma, edges.len()).min(edges.len());
    let mut ranked: Vec<(usize, usize)> = edges.iter().map(|&(i, j)| (i.min(j), i.max(j))).collect();
    ranked.sort_by(|&(i1, j1), &(i2, j2)| {
        p_sym
            .get(i2, j2)
            .partial_cmp(&p_sym.get(i1, j1))
            .unwrap_or(Ordering::Equal)
            .then((i1, j1).cmp(&(i2, j2)))
    });
    ranked.truncate(keep);
    ranked.sort_unstable();
    ranked
}

/// Records `P_cut`: `P_sym` with pruned edges zeroed in both orientations and
/// the diagonal left untouched. Returns the cut and the surviving edges.
pub fn top_gamma_cut<T: Scalar>(
    tape: &mut Tape<T>,
    p_sym: Var,
    gamma: f64,
    edges: &[(usize, usize)],
) -> Result<(Var, Vec<(usize, usize)>)> {
    let n = tape.shape(p_sym).0;
    let survivors = top_gamma_survivors(tape.value(p_sym), gamma, edges);
    let mut mask = Tensor::<T>::eye(n);
    for &(i, j) in &survivors {
        mask.set(i, j, T::one());
        mask.set(j, i, T::one());
    }
    let mask = tape.constant(mask);
    Ok((tape.mul(p_sym, mask)?, survivors))
}

/// Node importance: `sym_norm(P_cut + I) H 1`, i.e. row sums of the
/// normalised propagation of `H`. With `double_self_loop = false` the
/// identity is not added again (the cut matrix already has a unit diagonal).
pub fn node_scores<T: Scalar>(p_cut: &Tensor<T>, h: &Tensor<T>, double_self_loop: bool) -> Result<Vec<T>> {
    let n = p_cut.rows();
    if h.rows() != n {
        return Err(shape_err(
            "node_scores",
            format!("{} embedding rows for {n} nodes", h.rows()),
        ));
    }
    let p_hat = if double_self_loop {
        p_cut.add(&Tensor::eye(n))?
    } else {
        p_cut.clone()
    };
    let s = sym_norm(&p_hat)?.matmul(&h.row_sums())?;
    Ok(s.into_data())
}

/// Indices of the `max(1, ceil(n * epsilon))` highest scores, best first;
/// ties go to the smaller index.
pub fn select_top_nodes<T: Scalar>(scores: &[T], epsilon: f64) -> Vec<usize> {
    let n = scores.len();
    let k = ceil_count(epsilon, n).clamp(1, n.max(1)).min(n);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx.truncate(k);
    idx
}

/// Recorded output of one pooling layer.
#[derive(Clone, Debug)]
pub struct PoolOutput {
    /// K x out fused features
    pub z: Var,
    /// structure for the next layer: K nodes, surviving edges among them and
    /// the K x K cut proximity block as propagation weights
    pub adj: Adjacency,
    /// selected node ids, best score first
    pub indices: Vec<usize>,
    /// n x n cut proximity matrix
    pub p_cut: Var,
    /// surviving original edges, sorted
    pub retained: Vec<(usize, usize)>,
    /// Smallest gap between the last kept and first dropped value, over the
    /// edge cut and the node selection; infinite when nothing was dropped.
    pub margin: f64,
}

/// Value snapshot of a [`PoolOutput`].
#[derive(Clone, Debug, PartialEq)]
pub struct PooledGraph<T> {
    pub z: Tensor<T>,
    pub adj: Tensor<T>,
    pub indices: Vec<usize>,
    pub proximity_full: Tensor<T>,
    pub retained: Vec<(usize, usize)>,
}

impl PoolOutput {
    pub fn snapshot<T: Scalar>(&self, tape: &Tape<T>) -> PooledGraph<T> {
        let adj = match self.adj.weights {
            Some(w) => tape.value(w).clone(),
            None => Tensor::eye(self.adj.n),
        };
        PooledGraph {
            z: tape.value(self.z).clone(),
            adj,
            indices: self.indices.clone(),
            proximity_full: tape.value(self.p_cut).clone(),
            retained: self.retained.clone(),
        }
    }
}

/// One cross-view pooling layer on the graph `(h, adj)`.
pub fn copool_forward<T: Scalar>(
    tape: &mut Tape<T>,
    h: Var,
    adj: &Adjacency,
    params: &CoPoolParams<Var>,
    config: &CoPoolConfig,
) -> Result<PoolOutput> {
    config.validate()?;
    let n = adj.n;
    let (hn, f) = tape.shape(h);
    if hn != n {
        return Err(shape_err("copool_forward", format!("{hn} rows for {n} nodes")));
    }
    if tape.shape(params.beta).0 != config.gpr_steps + 1 {
        return Err(shape_err(
            "copool_forward",
            format!(
                "{} propagation weights for T = {}",
                tape.shape(params.beta).0,
                config.gpr_steps
            ),
        ));
    }

    let o = match config.mode {
        PoolMode::NoGpr => h,
        _ => {
            let prop = adj.propagation(tape)?;
            gpr_propagate(tape, h, prop, params.beta)?
        }
    };
    let p = proximity_weights(tape, o, n, &adj.edges, params.a, params.w_prox)?;
    let p_sym = symmetrize_proximity(tape, p)?;
    let (p_cut, retained) = top_gamma_cut(tape, p_sym, config.gamma, &adj.edges)?;
    let edge_weights: Vec<T> = {
        let ps = tape.value(p_sym);
        adj.edges.iter().map(|&(i, j)| ps.get(i, j)).collect()
    };
    let mut margin = boundary_gap(&edge_weights, retained.len());

    if config.mode == PoolMode::NoNodeView {
        let agg = tape.matmul(p_cut, o)?;
        let z = tape.matmul(agg, params.w_fuse)?;
        return Ok(PoolOutput {
            z,
            adj: Adjacency {
                n,
                edges: retained.clone(),
                weights: Some(p_cut),
            },
            indices: (0..n).collect(),
            p_cut,
            retained,
            margin,
        });
    }

    let fuse_rows = tape.shape(params.w_fuse).0;
    if fuse_rows != 2 * f {
        return Err(shape_err(
            "copool_forward",
            format!("fusion map has {fuse_rows} rows, expected {}", 2 * f),
        ));
    }
    let scores = node_scores(tape.value(p_cut), tape.value(h), config.double_self_loop)?;
    let indices = select_top_nodes(&scores, config.epsilon);
    margin = margin.min(boundary_gap(&scores, indices.len()));

    let cut_rows = tape.select_rows(p_cut, &indices)?;
    let edge_view = tape.matmul(cut_rows, o)?;
    let node_view = tape.select_rows(h, &indices)?;
    let fused = tape.concat_cols(&[edge_view, node_view])?;
    let z = tape.matmul(fused, params.w_fuse)?;

    // P_cut(indices, indices)
    let cols_t = tape.transpose(cut_rows);
    let block_t = tape.select_rows(cols_t, &indices)?;
    let block = tape.transpose(block_t);

    let mut position = vec![usize::MAX; n];
    for (k, &v) in indices.iter().enumerate() {
        position[v] = k;
    }
    let mut next_edges: Vec<(usize, usize)> = retained
        .iter()
        .filter(|&&(i, j)| position[i] != usize::MAX && position[j] != usize::MAX)
        .map(|&(i, j)| {
            let (a, b) = (position[i], position[j]);
            (a.min(b), a.max(b))
        })
        .collect();
    next_edges.sort_unstable();

    Ok(PoolOutput {
        z,
        adj: Adjacency {
            n: indices.len(),
            edges: next_edges,
            weights: Some(block),
        },
        indices,
        p_cut,
        retained,
        margin,
    })
}

fn boundary_gap<T: Scalar>(values: &[T], keep: usize) -> f64 {
    if keep == 0 || keep >= values.len() {
        return f64::INFINITY;
    }
    let mut v: Vec<f64> = values.iter().map(|x| x.as_f64()).collect();
    v.sort_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
    v[keep - 1] - v[keep]
}
