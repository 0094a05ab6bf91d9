//! Central-difference verification of tape gradients.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn scalar_value(v: Var<'_>) -> Result<f64> {
    let t = v.value();
    if t.numel() != 1 {
        return Err(Error::Contract(format!(
            "grad_check needs a scalar function, got shape {:?}",
            t.shape()
        )));
    }
    Ok(t.data()[0])
}

/// Max relative error between tape gradients of `f` at `x` and central
/// differences `(f(x+h·eᵢ) − f(x−h·eᵢ)) / 2h`, using the scale
/// `max(1, |analytic|, |numeric|)` per entry.
pub fn grad_check<F>(f: F, x: &Tensor, h: f64) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, Var<'t>) -> Result<Var<'t>>,
{
    grad_check_many(|tape, xs| f(tape, xs[0]), std::slice::from_ref(x), h)
}

/// [`grad_check`] over several inputs at once; the error is the max over all
/// entries of all inputs.
pub fn grad_check_many<F>(f: F, xs: &[Tensor], h: f64) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    if !(h > 0.0) {
        return Err(Error::Parameter(format!("step size must be positive, got {h}")));
    }
    let analytic: Vec<Tensor> = {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = xs.iter().map(|x| tape.param(x.clone())).collect();
        let loss = f(&tape, &vars)?;
        scalar_value(loss)?;
        let grads = tape.backward(loss)?;
        vars.iter().map(|&v| grads.wrt(v)).collect()
    };

    let eval = |inputs: &[Tensor]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = inputs.iter().map(|x| tape.param(x.clone())).collect();
        scalar_value(f(&tape, &vars)?)
    };

    let mut worst = 0.0f64;
    let mut probe: Vec<Tensor> = xs.to_vec();
    for (which, grad) in analytic.iter().enumerate() {
        for i in 0..xs[which].numel() {
            let orig = xs[which].data()[i];
            probe[which].data_mut()[i] = orig + h;
            let up = eval(&probe)?;
            probe[which].data_mut()[i] = orig - h;
            let down = eval(&probe)?;
            probe[which].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = grad.data()[i];
            let scale = 1.0f64.max(a.abs()).max(numeric.abs());
            worst = worst.max((a - numeric).abs() / scale);
        }
    }
    Ok(worst)
}
