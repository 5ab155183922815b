use alloc::vec;
use alloc::vec::Vec;

use crate::error::Result;
use crate::math;
use crate::tensor::Module;

/// One RMSProp update without momentum:
/// `v = alpha v + (1 - alpha) g^2`, `p -= lr g / (sqrt(v) + eps)`.
pub fn rmsprop_update(params: &mut [f64], grads: &[f64], v: &mut [f64], lr: f64, alpha: f64, eps: f64) {
    for ((p, &g), s) in params.iter_mut().zip(grads).zip(v.iter_mut()) {
        *s = alpha * *s + (1.0 - alpha) * g * g;
        *p -= lr * g / (math::sqrt(*s) + eps);
    }
}

pub struct RmsProp {
    pub lr: f64,
    pub alpha: f64,
    pub eps: f64,
    state: Vec<Vec<f64>>,
}

impl RmsProp {
    pub fn new(lr: f64, alpha: f64, eps: f64) -> Self {
        RmsProp {
            lr,
            alpha,
            eps,
            state: Vec::new(),
        }
    }

    /// Squared-gradient averages, one buffer per parameter in module order.
    pub fn state(&self) -> &[Vec<f64>] {
        &self.state
    }

    /// Updates every parameter of `module` from its accumulated gradient.
    /// Parameters without a gradient are treated as having a zero gradient.
    pub fn step<M: Module + ?Sized>(&mut self, module: &mut M) -> Result<()> {
        let mut params = module.parameters_mut();
        if self.state.is_empty() {
            self.state = params.iter().map(|p| vec![0.0; p.numel()]).collect();
        }
        for (p, v) in params.iter_mut().zip(self.state.iter_mut()) {
            let t = p.tensor_mut();
            let g = t.grad().map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; t.numel()]);
            rmsprop_update(t.data_mut(), &g, v, self.lr, self.alpha, self.eps);
        }
        Ok(())
    }
}
