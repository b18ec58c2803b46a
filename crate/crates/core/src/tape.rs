//! Reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Tape`] is an arena of recorded operations. Every op appends one node
//! whose inputs are earlier nodes, so the node order is already topological
//! and the backward pass is a single reverse sweep. Nodes that depend on no
//! gradient-carrying leaf are recorded as constants and skipped on the way back.
//!
//! A tape is single-threaded; build one per training step.

use rand::Rng;

use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, T),
    /// second input is 1x1
    ScaleBy(Var, Var),
    Mul(Var, Var),
    Transpose(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SelectRows(Var, Vec<usize>),
    Sigmoid(Var),
    Relu(Var),
    RowSum(Var),
    ColSum(Var),
    MeanRows(Var),
    /// argmax row per column, first occurrence wins
    MaxRows(Var, Vec<usize>),
    /// mask already carries the 1/(1-rate) factor
    Dropout(Var, Tensor<T>),
    LogSoftmax(Var),
    Nll(Var, Vec<usize>),
    L1(Var, Var),
    /// inverse square roots of the row sums
    SymNorm(Var, Vec<T>),
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients produced by [`Tape::backward`], indexed by the tape's vars.
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
    shapes: Vec<(usize, usize)>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of the loss with respect to `v`; zeros when `v` does not
    /// influence the loss.
    pub fn wrt(&self, v: Var) -> Tensor<T> {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Tensor::zeros(r, c)
            }
        }
    }

    pub fn take(&mut self, v: Var) -> Tensor<T> {
        match self.grads[v.0].take() {
            Some(g) => g,
            None => {
                let (r, c) = self.shapes[v.0];
                Tensor::zeros(r, c)
            }
        }
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Registers a differentiable leaf (a parameter or an input under test).
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Registers a constant; no gradient flows into it.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).add(self.value(b))?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).sub(self.value(b))?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let out = self.value(a).scale(s);
        let rg = self.rg(&[a]);
        self.push(out, Op::Scale(a, s), rg)
    }

    /// Multiplies every entry of `a` by the 1x1 tensor `s`.
    pub fn scale_by(&mut self, a: Var, s: Var) -> Result<Var> {
        if self.shape(s) != (1, 1) {
            return Err(shape_err(
                "scale_by",
                format!("scale factor is {:?}, expected 1x1", self.shape(s)),
            ));
        }
        let out = self.value(a).scale(self.value(s).item());
        let rg = self.rg(&[a, s]);
        Ok(self.push(out, Op::ScaleBy(a, s), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).hadamard(self.value(b))?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        let rg = self.rg(&[a]);
        self.push(out, Op::Transpose(a), rg)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(shape_err("concat_cols", "no inputs"));
        }
        let vals: Vec<&Tensor<T>> = parts.iter().map(|&p| self.value(p)).collect();
        let out = Tensor::concat_cols(&vals)?;
        let rg = self.rg(parts);
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), rg))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(shape_err("concat_rows", "no inputs"));
        }
        let vals: Vec<&Tensor<T>> = parts.iter().map(|&p| self.value(p)).collect();
        let out = Tensor::concat_rows(&vals)?;
        let rg = self.rg(parts);
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), rg))
    }

    pub fn select_rows(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let out = self.value(a).select_rows(indices)?;
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::SelectRows(a, indices.to_vec()), rg))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        let rg = self.rg(&[a]);
        self.push(out, Op::Sigmoid(a), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self
            .value(a)
            .map(|v| if v > T::zero() { v } else { T::zero() });
        let rg = self.rg(&[a]);
        self.push(out, Op::Relu(a), rg)
    }

    /// n x m -> n x 1
    pub fn row_sum(&mut self, a: Var) -> Var {
        let out = self.value(a).row_sums();
        let rg = self.rg(&[a]);
        self.push(out, Op::RowSum(a), rg)
    }

    /// n x m -> 1 x m
    pub fn col_sum(&mut self, a: Var) -> Var {
        let out = self.value(a).col_sums();
        let rg = self.rg(&[a]);
        self.push(out, Op::ColSum(a), rg)
    }

    /// Sum of all entries as a 1x1 tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let r = self.row_sum(a);
        self.col_sum(r)
    }

    /// Column-wise mean over rows: n x m -> 1 x m.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        if x.rows() == 0 {
            return Err(shape_err("mean_rows", "zero rows"));
        }
        let out = x.col_sums().scale(T::one() / T::of(x.rows() as f64));
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::MeanRows(a), rg))
    }

    /// Column-wise max over rows: n x m -> 1 x m.
    pub fn max_rows(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        if x.rows() == 0 {
            return Err(shape_err("max_rows", "zero rows"));
        }
        let mut arg = vec![0usize; x.cols()];
        let mut best = x.row(0).to_vec();
        for i in 1..x.rows() {
            for (j, &v) in x.row(i).iter().enumerate() {
                if v > best[j] {
                    best[j] = v;
                    arg[j] = i;
                }
            }
        }
        let out = Tensor::from_vec(1, best.len(), best)?;
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::MaxRows(a, arg), rg))
    }

    /// Inverted dropout: entries kept with probability `1 - rate` and scaled
    /// by `1 / (1 - rate)`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, rate: f64, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidArgument(format!(
                "dropout rate {rate} outside [0, 1)"
            )));
        }
        let (r, c) = self.shape(a);
        let keep = T::of(1.0 / (1.0 - rate));
        let mask: Vec<T> = (0..r * c)
            .map(|_| {
                if rng.gen::<f64>() >= rate {
                    keep
                } else {
                    T::zero()
                }
            })
            .collect();
        let mask = Tensor::from_vec(r, c, mask)?;
        self.apply_mask(a, mask)
    }

    /// Multiplies by a fixed mask, recorded as a dropout node.
    pub fn apply_mask(&mut self, a: Var, mask: Tensor<T>) -> Result<Var> {
        let out = self.value(a).hadamard(&mask)?;
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::Dropout(a, mask), rg))
    }

    /// Row-wise log-softmax.
    pub fn log_softmax(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut out = x.clone();
        for i in 0..x.rows() {
            let row = x.row(i);
            let m = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<T>().ln();
            for (j, &v) in row.iter().enumerate() {
                out.set(i, j, v - lse);
            }
        }
        let rg = self.rg(&[a]);
        self.push(out, Op::LogSoftmax(a), rg)
    }

    /// Mean negative log-likelihood, gathering `logp[i, targets[i]]`.
    pub fn nll(&mut self, logp: Var, targets: &[usize]) -> Result<Var> {
        let x = self.value(logp);
        if targets.len() != x.rows() || x.rows() == 0 {
            return Err(shape_err(
                "nll",
                format!("{} targets for {} rows", targets.len(), x.rows()),
            ));
        }
        let mut acc = T::zero();
        for (i, &t) in targets.iter().enumerate() {
            if t >= x.cols() {
                return Err(Error::IndexOutOfRange {
                    op: "nll",
                    index: t,
                    len: x.cols(),
                });
            }
            acc -= x.get(i, t);
        }
        let out = Tensor::scalar(acc / T::of(targets.len() as f64));
        let rg = self.rg(&[logp]);
        Ok(self.push(out, Op::Nll(logp, targets.to_vec()), rg))
    }

    /// Mean absolute error between two same-shape tensors.
    pub fn l1(&mut self, a: Var, b: Var) -> Result<Var> {
        let d = self.value(a).sub(self.value(b))?;
        if d.is_empty() {
            return Err(shape_err("l1", "empty input"));
        }
        let out = Tensor::scalar(d.data().iter().map(|v| v.abs()).sum::<T>() / T::of(d.len() as f64));
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::L1(a, b), rg))
    }

    /// `D^{-1/2} W D^{-1/2}` with `D = diag(row sums of W)`.
    pub fn sym_norm(&mut self, w: Var) -> Result<Var> {
        let (out, dinv) = sym_norm_values(self.value(w))?;
        let rg = self.rg(&[w]);
        Ok(self.push(out, Op::SymNorm(w, dinv), rg))
    }

    /// Runs the reverse sweep from a 1x1 `loss`, consuming the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients<T>> {
        let (r, c) = self.shape(loss);
        if (r, c) != (1, 1) {
            return Err(Error::NonScalarLoss { rows: r, cols: c });
        }
        let n = self.nodes.len();
        let shapes: Vec<_> = self.nodes.iter().map(|n| n.value.shape()).collect();
        let mut grads: Vec<Option<Tensor<T>>> = (0..n).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(T::one()));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &g, &mut grads)?;
            // keep the upstream grad of interior nodes around for inspection
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads, shapes })
    }

    fn propagate(&self, idx: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) -> Result<()> {
        let node = &self.nodes[idx];
        let val = |v: Var| &self.nodes[v.0].value;
        let mut acc = |v: Var, delta: Tensor<T>| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign_unchecked(&delta),
                slot @ None => *slot = Some(delta),
            }
        };

        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.requires_grad(*a) {
                    acc(*a, g.matmul(&val(*b).transpose())?);
                }
                if self.requires_grad(*b) {
                    acc(*b, val(*a).transpose().matmul(g)?);
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.scale(-T::one()));
            }
            Op::Scale(a, s) => acc(*a, g.scale(*s)),
            Op::ScaleBy(a, s) => {
                if self.requires_grad(*a) {
                    acc(*a, g.scale(val(*s).item()));
                }
                if self.requires_grad(*s) {
                    let d: T = g.data().iter().zip(val(*a).data()).map(|(&x, &y)| x * y).sum();
                    acc(*s, Tensor::scalar(d));
                }
            }
            Op::Mul(a, b) => {
                if self.requires_grad(*a) {
                    acc(*a, g.hadamard(val(*b))?);
                }
                if self.requires_grad(*b) {
                    acc(*b, g.hadamard(val(*a))?);
                }
            }
            Op::Transpose(a) => acc(*a, g.transpose()),
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let (rows, cols) = val(p).shape();
                    let mut d = Tensor::zeros(rows, cols);
                    for i in 0..rows {
                        d.data_mut()[i * cols..(i + 1) * cols]
                            .copy_from_slice(&g.row(i)[offset..offset + cols]);
                    }
                    offset += cols;
                    acc(p, d);
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let (rows, cols) = val(p).shape();
                    let d = Tensor::from_vec(
                        rows,
                        cols,
                        g.data()[offset * cols..(offset + rows) * cols].to_vec(),
                    )?;
                    offset += rows;
                    acc(p, d);
                }
            }
            Op::SelectRows(a, indices) => {
                let (rows, cols) = val(*a).shape();
                let mut d = Tensor::zeros(rows, cols);
                for (k, &r) in indices.iter().enumerate() {
                    for (dst, &src) in d.data_mut()[r * cols..(r + 1) * cols]
                        .iter_mut()
                        .zip(g.row(k))
                    {
                        *dst += src;
                    }
                }
                acc(*a, d);
            }
            Op::Sigmoid(a) => {
                let y = &node.value;
                let d = g.zip_map(y, "sigmoid", |gv, yv| gv * yv * (T::one() - yv))?;
                acc(*a, d);
            }
            Op::Relu(a) => {
                let d = g.zip_map(val(*a), "relu", |gv, xv| {
                    if xv > T::zero() {
                        gv
                    } else {
                        T::zero()
                    }
                })?;
                acc(*a, d);
            }
            Op::RowSum(a) => {
                let (rows, cols) = val(*a).shape();
                let mut d = Tensor::zeros(rows, cols);
                for i in 0..rows {
                    let gi = g.get(i, 0);
                    d.data_mut()[i * cols..(i + 1) * cols].fill(gi);
                }
                acc(*a, d);
            }
            Op::ColSum(a) | Op::MeanRows(a) => {
                let (rows, cols) = val(*a).shape();
                let factor = if matches!(node.op, Op::MeanRows(_)) {
                    T::one() / T::of(rows as f64)
                } else {
                    T::one()
                };
                let mut d = Tensor::zeros(rows, cols);
                for i in 0..rows {
                    for j in 0..cols {
                        d.set(i, j, g.get(0, j) * factor);
                    }
                }
                acc(*a, d);
            }
            Op::MaxRows(a, arg) => {
                let (rows, cols) = val(*a).shape();
                let mut d = Tensor::zeros(rows, cols);
                for (j, &i) in arg.iter().enumerate() {
                    d.set(i, j, g.get(0, j));
                }
                acc(*a, d);
            }
            Op::Dropout(a, mask) => acc(*a, g.hadamard(mask)?),
            Op::LogSoftmax(a) => {
                let y = &node.value;
                let (rows, cols) = y.shape();
                let mut d = Tensor::zeros(rows, cols);
                for i in 0..rows {
                    let gsum: T = g.row(i).iter().copied().sum();
                    for j in 0..cols {
                        d.set(i, j, g.get(i, j) - y.get(i, j).exp() * gsum);
                    }
                }
                acc(*a, d);
            }
            Op::Nll(a, targets) => {
                let (rows, cols) = val(*a).shape();
                let mut d = Tensor::zeros(rows, cols);
                let w = -g.item() / T::of(rows as f64);
                for (i, &t) in targets.iter().enumerate() {
                    d.set(i, t, w);
                }
                acc(*a, d);
            }
            Op::L1(a, b) => {
                let diff = val(*a).sub(val(*b))?;
                let w = g.item() / T::of(diff.len() as f64);
                let d = diff.map(|v| {
                    if v > T::zero() {
                        w
                    } else if v < T::zero() {
                        -w
                    } else {
                        T::zero()
                    }
                });
                acc(*b, d.scale(-T::one()));
                acc(*a, d);
            }
            Op::SymNorm(w, dinv) => {
                let wv = val(*w);
                let n = wv.rows();
                // c_i = dL/dd_i, from row i and column i of the output
                let mut c = vec![T::zero(); n];
                for i in 0..n {
                    for j in 0..n {
                        let gw = g.get(i, j) * wv.get(i, j);
                        c[i] += gw * dinv[j];
                        c[j] += gw * dinv[i];
                    }
                }
                let half = T::of(0.5);
                let mut d = Tensor::zeros(n, n);
                for i in 0..n {
                    let ds = -half * dinv[i] * dinv[i] * dinv[i] * c[i];
                    for j in 0..n {
                        d.set(i, j, g.get(i, j) * dinv[i] * dinv[j] + ds);
                    }
                }
                acc(*w, d);
            }
        }
        Ok(())
    }
}

/// Numerically stable logistic function.
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Plain (non-recorded) symmetric normalization; also returns `d_i = s_i^{-1/2}`.
pub(crate) fn sym_norm_values<T: Scalar>(w: &Tensor<T>) -> Result<(Tensor<T>, Vec<T>)> {
    let (n, m) = w.shape();
    if n != m {
        return Err(shape_err("sym_norm", format!("{n}x{m} is not square")));
    }
    let mut sums = Vec::with_capacity(n);
    for i in 0..n {
        let s: T = w.row(i).iter().copied().sum();
        if !(s > T::zero()) {
            return Err(Error::ZeroDegree { node: i });
        }
        sums.push(s);
    }
    let dinv = sums.iter().map(|s| T::one() / s.sqrt()).collect();
    let mut out = w.clone();
    for i in 0..n {
        for j in 0..n {
            out.set(i, j, w.get(i, j) / (sums[i] * sums[j]).sqrt());
        }
    }
    Ok((out, dinv))
}
