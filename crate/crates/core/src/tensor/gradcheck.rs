use alloc::vec::Vec;

use super::{Module, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::math;

fn scalar_of(tape: &Tape, v: Var) -> Result<f64> {
    let t = tape.value(v);
    if t.numel() != 1 {
        return Err(Error::contract("gradient check needs a scalar-valued function"));
    }
    Ok(t.data()[0])
}

fn rel_err(numeric: f64, analytic: f64) -> f64 {
    math::abs(numeric - analytic) / math::abs(analytic).max(1.0)
}

/// Compares tape gradients of a scalar function against central differences.
///
/// Returns `max_i |numeric_i - analytic_i| / max(1, |analytic_i|)`.
pub fn finite_diff_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    finite_diff_check_many(|tape, vars| f(tape, vars[0]), core::slice::from_ref(x), eps)
}

/// [`finite_diff_check`] over several inputs at once.
pub fn finite_diff_check_many<F>(f: F, inputs: &[Tensor], eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::inference();
        let vars: Vec<Var> = values.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        scalar_of(&tape, out)
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    scalar_of(&tape, out)?;
    tape.backward(out)?;

    let mut worst = 0.0f64;
    let mut probe: Vec<Tensor> = inputs.to_vec();
    for (which, var) in vars.iter().enumerate() {
        let analytic: Vec<f64> = match tape.grad(*var) {
            Some(g) => g.to_vec(),
            None => alloc::vec![0.0; inputs[which].numel()],
        };
        for i in 0..inputs[which].numel() {
            let orig = inputs[which].data()[i];
            probe[which].data_mut()[i] = orig + eps;
            let up = eval(&probe)?;
            probe[which].data_mut()[i] = orig - eps;
            let down = eval(&probe)?;
            probe[which].data_mut()[i] = orig;
            worst = worst.max(rel_err((up - down) / (2.0 * eps), analytic[i]));
        }
    }
    Ok(worst)
}

/// Central-difference check over every parameter of `module`.
///
/// `f` must build its graph through [`Tape::param`] so parameter gradients
/// are recorded.
pub fn finite_diff_check_module<M, F>(module: &mut M, f: F, eps: f64) -> Result<f64>
where
    M: Module,
    F: Fn(&mut Tape, &M) -> Result<Var>,
{
    let mut tape = Tape::new();
    let out = f(&mut tape, module)?;
    scalar_of(&tape, out)?;
    tape.backward(out)?;
    let analytic: Vec<Vec<f64>> = module
        .parameters()
        .iter()
        .map(|p| {
            tape.param_var(p.name())
                .and_then(|v| tape.grad(v))
                .map(|g| g.to_vec())
                .unwrap_or_else(|| alloc::vec![0.0; p.numel()])
        })
        .collect();
    drop(tape);

    let eval = |m: &M| -> Result<f64> {
        let mut tape = Tape::inference();
        let out = f(&mut tape, m)?;
        scalar_of(&tape, out)
    };

    let mut worst = 0.0f64;
    for (pi, grad) in analytic.iter().enumerate() {
        for i in 0..grad.len() {
            let orig = module.parameters()[pi].tensor().data()[i];
            module.parameters_mut()[pi].tensor_mut().data_mut()[i] = orig + eps;
            let up = eval(module)?;
            module.parameters_mut()[pi].tensor_mut().data_mut()[i] = orig - eps;
            let down = eval(module)?;
            module.parameters_mut()[pi].tensor_mut().data_mut()[i] = orig;
            worst = worst.max(rel_err((up - down) / (2.0 * eps), grad[i]));
        }
    }
    Ok(worst)
}
