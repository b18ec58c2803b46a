//! Central finite-difference gradient checking.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Compares reverse-mode gradients with central differences.
///
/// `builder` receives a fresh tape plus one var per entry of `leaves` and
/// must return a 1x1 loss. The result is the largest
/// `|analytic - numeric| / max(1e-8, |analytic| + |numeric|)` over every leaf
/// entry.
pub fn grad_check<T, F>(mut builder: F, leaves: &[Tensor<T>], step: f64) -> Result<f64>
where
    T: Scalar,
    F: FnMut(&mut Tape<T>, &[Var]) -> Result<Var>,
{
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!("step {step} must be > 0")));
    }

    let mut tape = Tape::new();
    let vars: Vec<Var> = leaves.iter().map(|l| tape.leaf(l.clone())).collect();
    let loss = builder(&mut tape, &vars)?;
    let base = tape.value(loss).item().as_f64();
    let grads = tape.backward(loss)?;
    let analytic: Vec<Tensor<T>> = vars.iter().map(|&v| grads.wrt(v)).collect();

    let again = eval(&mut builder, leaves)?;
    if again != base {
        return Err(Error::NonDeterministic {
            first: base,
            second: again,
        });
    }

    let mut worst = 0.0f64;
    let mut probe: Vec<Tensor<T>> = leaves.to_vec();
    for (li, leaf) in leaves.iter().enumerate() {
        for k in 0..leaf.len() {
            let x = leaf.data()[k].as_f64();
            probe[li].data_mut()[k] = T::of(x + step);
            let plus = eval(&mut builder, &probe)?;
            probe[li].data_mut()[k] = T::of(x - step);
            let minus = eval(&mut builder, &probe)?;
            probe[li].data_mut()[k] = leaf.data()[k];

            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic[li].data()[k].as_f64();
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

fn eval<T, F>(builder: &mut F, leaves: &[Tensor<T>]) -> Result<f64>
where
    T: Scalar,
    F: FnMut(&mut Tape<T>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = leaves.iter().map(|l| tape.leaf(l.clone())).collect();
    let loss = builder(&mut tape, &vars)?;
    let v = tape.value(loss);
    if v.shape() != (1, 1) {
        return Err(Error::NonScalarLoss {
            rows: v.rows(),
            cols: v.cols(),
        });
    }
    Ok(v.item().as_f64())
}
