//! Graph convolution, readout, dense layers and the Adam optimizer.

use rand::Rng;

use crate::error::{shape_err, Error, Result};
use crate::scalar::Scalar;
use crate::tape::{sym_norm_values, Tape, Var};
use crate::tensor::Tensor;

/// `D^{-1/2} W D^{-1/2}` with `D = diag(row sums of W)`.
///
/// Every row of `W` must have a positive sum; callers add self-loops first.
pub fn sym_norm<T: Scalar>(w: &Tensor<T>) -> Result<Tensor<T>> {
    sym_norm_values(w).map(|(out, _)| out)
}

/// Dense 0/1 adjacency of an undirected edge list, without self-loops.
pub fn dense_adjacency<T: Scalar>(n: usize, edges: &[(usize, usize)]) -> Tensor<T> {
    let mut a = Tensor::zeros(n, n);
    for &(i, j) in edges {
        a.set(i, j, T::one());
        a.set(j, i, T::one());
    }
    a
}

/// Structure handed from layer to layer.
///
/// `edges` is the binary pattern (unordered pairs, `i < j`). `weights`, when
/// present, is a recorded `n x n` matrix whose off-diagonal part replaces the
/// 0/1 adjacency during propagation; this is how the pooled proximity matrix
/// of one pooling stage feeds the next convolution.
#[derive(Clone, Debug, PartialEq)]
pub struct Adjacency {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
    pub weights: Option<Var>,
}

impl Adjacency {
    pub fn binary(n: usize, edges: Vec<(usize, usize)>) -> Self {
        Adjacency {
            n,
            edges,
            weights: None,
        }
    }

    /// Records `sym_norm(A + I)`, where `A` is the off-diagonal part of the
    /// weighted matrix or the 0/1 adjacency.
    pub fn propagation<T: Scalar>(&self, tape: &mut Tape<T>) -> Result<Var> {
        match self.weights {
            None => {
                let mut a_hat = dense_adjacency::<T>(self.n, &self.edges);
                for i in 0..self.n {
                    a_hat.set(i, i, T::one());
                }
                Ok(tape.constant(sym_norm(&a_hat)?))
            }
            Some(w) => {
                if tape.shape(w) != (self.n, self.n) {
                    return Err(shape_err(
                        "propagation",
                        format!("weights {:?} for {} nodes", tape.shape(w), self.n),
                    ));
                }
                let mut off = Tensor::ones(self.n, self.n);
                for i in 0..self.n {
                    off.set(i, i, T::zero());
                }
                let off = tape.constant(off);
                let eye = tape.constant(Tensor::eye(self.n));
                let masked = tape.mul(w, off)?;
                let a_hat = tape.add(masked, eye)?;
                tape.sym_norm(a_hat)
            }
        }
    }
}

/// Glorot/Xavier uniform initialisation.
pub fn glorot<T: Scalar, R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor<T> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| T::of(rng.gen_range(-limit..=limit)))
        .collect();
    Tensor::from_vec(rows, cols, data).expect("shape by construction")
}

/// One graph convolution: `H = sym_norm(A + I) X Theta`.
#[derive(Clone, Debug, PartialEq)]
pub struct GcnLayer<P> {
    pub theta: P,
}

impl<T: Scalar> GcnLayer<Tensor<T>> {
    pub fn new<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        GcnLayer {
            theta: glorot(in_dim, out_dim, rng),
        }
    }
}

impl GcnLayer<Var> {
    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, x: Var, adj: &Adjacency) -> Result<Var> {
        gcn_forward(tape, x, adj, self.theta)
    }
}

pub fn gcn_forward<T: Scalar>(tape: &mut Tape<T>, x: Var, adj: &Adjacency, theta: Var) -> Result<Var> {
    if tape.shape(x).0 != adj.n {
        return Err(shape_err(
            "gcn_forward",
            format!("{} feature rows for {} nodes", tape.shape(x).0, adj.n),
        ));
    }
    let prop = adj.propagation(tape)?;
    let xt = tape.matmul(x, theta)?;
    tape.matmul(prop, xt)
}

/// Per-slot `[column mean || column max]`, one output row per slot.
pub fn readout<T: Scalar>(tape: &mut Tape<T>, h: Var, membership: &[usize]) -> Result<Var> {
    let (n, _) = tape.shape(h);
    if membership.len() != n {
        return Err(shape_err(
            "readout",
            format!("{} memberships for {n} rows", membership.len()),
        ));
    }
    let slots = membership.iter().max().map_or(0, |m| m + 1);
    let mut rows = Vec::with_capacity(slots);
    for s in 0..slots {
        let idx: Vec<usize> = (0..n).filter(|&v| membership[v] == s).collect();
        if idx.is_empty() {
            return Err(Error::InvalidArgument(format!("readout: slot {s} is empty")));
        }
        let part = if idx.len() == n {
            h
        } else {
            tape.select_rows(h, &idx)?
        };
        let mean = tape.mean_rows(part)?;
        let max = tape.max_rows(part)?;
        rows.push(tape.concat_cols(&[mean, max])?);
    }
    if rows.len() == 1 {
        return Ok(rows[0]);
    }
    tape.concat_rows(&rows)
}

/// Affine layer `X W + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear<P> {
    pub weight: P,
    pub bias: P,
}

impl<T: Scalar> Linear<Tensor<T>> {
    pub fn new<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        Linear {
            weight: glorot(in_dim, out_dim, rng),
            bias: Tensor::zeros(1, out_dim),
        }
    }
}

impl Linear<Var> {
    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, x: Var) -> Result<Var> {
        let (n, _) = tape.shape(x);
        let xw = tape.matmul(x, self.weight)?;
        let b = if n == 1 {
            self.bias
        } else {
            let ones = tape.constant(Tensor::ones(n, 1));
            tape.matmul(ones, self.bias)?
        };
        tape.add(xw, b)
    }
}

/// Adam with bias correction and decoupled weight decay
/// (`p -= lr * wd * p` before the moment update is applied).
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Adam {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [&mut Tensor<T>], grads: &[Tensor<T>]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(shape_err(
                "adam_step",
                format!("{} params, {} grads", params.len(), grads.len()),
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            p.expect_same_shape(g, "adam_step")?;
            if !g.all_finite() {
                return Err(Error::NonFinite(format!(
                    "gradient of parameter {i} ({}x{}) at step {}",
                    g.rows(),
                    g.cols(),
                    self.step + 1
                )));
            }
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| Tensor::zeros(p.rows(), p.cols())).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let c1 = T::of(1.0 - self.beta1.powi(t));
        let c2 = T::of(1.0 - self.beta2.powi(t));
        let lr = T::of(self.lr);
        let decay = T::of(self.lr * self.weight_decay);
        let eps = T::of(self.eps);

        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let pd = p.data_mut();
            let (md, vd) = (m.data_mut(), v.data_mut());
            for k in 0..pd.len() {
                let gk = g.data()[k];
                md[k] = b1 * md[k] + (T::one() - b1) * gk;
                vd[k] = b2 * vd[k] + (T::one() - b2) * gk * gk;
                let m_hat = md[k] / c1;
                let v_hat = vd[k] / c2;
                pd[k] = pd[k] - decay * pd[k];
                pd[k] = pd[k] - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn t(rows: &[&[f64]]) -> Tensor<f64> {
        Tensor::from_rows(rows).unwrap()
    }

    /// Oracle: D^{-1/2} as an explicit diagonal matrix, two dense products.
    fn dense_sym_norm(w: &Tensor<f64>) -> Tensor<f64> {
        let n = w.rows();
        let mut d = Tensor::zeros(n, n);
        for i in 0..n {
            d.set(i, i, 1.0 / w.row(i).iter().sum::<f64>().sqrt());
        }
        d.matmul(w).unwrap().matmul(&d).unwrap()
    }

    #[test]
    fn sym_norm_cases() {
        assert_eq!(sym_norm(&Tensor::<f64>::eye(3)).unwrap(), Tensor::eye(3));
        let w = t(&[&[1.0, 1.0], &[1.0, 1.0]]);
        assert_eq!(sym_norm(&w).unwrap(), Tensor::full(2, 2, 0.5));
        let z = t(&[&[1.0, 0.0], &[0.0, 0.0]]);
        assert!(matches!(sym_norm(&z), Err(Error::ZeroDegree { node: 1 })));
    }

    #[test]
    fn sym_norm_matches_dense_oracle_and_is_symmetric() {
        let mut r = rng::rng(11);
        for _ in 0..20 {
            let n = r.gen_range(1..8);
            let mut w = Tensor::<f64>::eye(n);
            for i in 0..n {
                for j in 0..i {
                    if r.gen_bool(0.4) {
                        let v = r.gen_range(0.0..1.0);
                        w.set(i, j, v);
                        w.set(j, i, v);
                    }
                }
            }
            let out = sym_norm(&w).unwrap();
            assert!(out.max_abs_diff(&dense_sym_norm(&w)).unwrap() < 1e-14);
            for i in 0..n {
                for j in 0..n {
                    assert!((out.get(i, j) - out.get(j, i)).abs() < 1e-15);
                }
            }
            // each entry is at most 1 and a row sums to at most sqrt(n) by Cauchy-Schwarz
            for i in 0..n {
                assert!(out.row(i).iter().sum::<f64>() <= (n as f64).sqrt() + 1e-12);
            }
        }
    }

    #[test]
    fn gcn_edgeless_is_plain_product() {
        let mut tape = Tape::new();
        let x0 = t(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]);
        let x = tape.constant(x0.clone());
        let th = tape.constant(Tensor::eye(2));
        let h = gcn_forward(&mut tape, x, &Adjacency::binary(3, vec![]), th).unwrap();
        assert_eq!(tape.value(h), &x0);
    }

    #[test]
    fn gcn_two_nodes() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[&[1.0], &[0.0]]));
        let th = tape.constant(t(&[&[1.0]]));
        let h = gcn_forward(&mut tape, x, &Adjacency::binary(2, vec![(0, 1)]), th).unwrap();
        assert_eq!(tape.value(h), &t(&[&[0.5], &[0.5]]));
    }

    #[test]
    fn gcn_dimension_mismatch() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::ones(3, 2));
        let th = tape.constant(Tensor::ones(3, 2));
        assert!(gcn_forward(&mut tape, x, &Adjacency::binary(3, vec![]), th).is_err());
        assert!(gcn_forward(&mut tape, x, &Adjacency::binary(4, vec![]), th).is_err());
    }

    #[test]
    fn readout_cases() {
        let mut tape = Tape::new();
        let h = tape.constant(t(&[&[0.0, 2.0], &[4.0, 0.0]]));
        let r = readout(&mut tape, h, &[0, 0]).unwrap();
        assert_eq!(tape.value(r), &t(&[&[2.0, 1.0, 4.0, 2.0]]));

        let single = tape.constant(t(&[&[3.0, -1.0]]));
        let r1 = readout(&mut tape, single, &[0]).unwrap();
        assert_eq!(tape.value(r1), &t(&[&[3.0, -1.0, 3.0, -1.0]]));

        let twice = tape.constant(t(&[&[3.0, -1.0], &[3.0, -1.0]]));
        let r2 = readout(&mut tape, twice, &[0, 0]).unwrap();
        assert_eq!(tape.value(r2), tape.value(r1));

        let two = tape.constant(t(&[&[1.0], &[5.0], &[2.0]]));
        let r3 = readout(&mut tape, two, &[1, 0, 1]).unwrap();
        assert_eq!(tape.value(r3), &t(&[&[5.0, 5.0], &[1.5, 2.0]]));
        assert!(readout(&mut tape, two, &[0, 2, 2]).is_err());
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let mut p = t(&[&[0.3, -0.2]]);
        let before = p.clone();
        let mut opt = Adam::new(0.01, 0.0);
        for _ in 0..5 {
            opt.step(&mut [&mut p], &[Tensor::zeros(1, 2)]).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn adam_first_step_is_signed_lr() {
        let mut p = t(&[&[0.0, 1.0, -2.0]]);
        let g = t(&[&[0.5, -3.0, 1e-3]]);
        let mut opt = Adam::new(0.01, 0.0);
        opt.step(&mut [&mut p], std::slice::from_ref(&g)).unwrap();
        // m_hat = g, v_hat = g^2: delta = -lr * g / (|g| + eps)
        let want = [
            -0.01 * 0.5 / (0.5 + 1e-8),
            1.0 + 0.01 * 3.0 / (3.0 + 1e-8),
            -2.0 - 0.01 * 1e-3 / (1e-3 + 1e-8),
        ];
        for (got, w) in p.data().iter().zip(want) {
            assert!((got - w).abs() < 1e-15, "{got} vs {w}");
        }
    }

    #[test]
    fn adam_moves_against_constant_gradient() {
        let mut p = t(&[&[0.0, 0.0]]);
        let mut opt = Adam::new(0.01, 0.0);
        for _ in 0..100 {
            opt.step(&mut [&mut p], &[t(&[&[2.0, -0.1]])]).unwrap();
        }
        assert!(p.get(0, 0) < -0.5 && p.get(0, 1) > 0.5);
    }

    #[test]
    fn adam_weight_decay_and_nan() {
        let mut p = t(&[&[1.0]]);
        let mut opt = Adam::new(0.1, 0.5);
        opt.step(&mut [&mut p], &[t(&[&[0.0]])]).unwrap();
        assert!((p.get(0, 0) - 0.95).abs() < 1e-15);
        let err = opt.step(&mut [&mut p], &[t(&[&[f64::NAN]])]).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }
}
