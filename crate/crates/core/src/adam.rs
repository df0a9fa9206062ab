//! Adam optimizer.
//!
//! The L2 term `weight_decay * param` is added to the gradient before the
//! moment updates, matching the conventional coupled formulation.

use crate::error::{PclError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// First/second moment buffers plus the shared step counter.
#[derive(Debug, Clone)]
pub struct AdamState<S: Scalar> {
    t: u32,
    m: Vec<Vec<S>>,
    v: Vec<Vec<S>>,
}

impl<S: Scalar> AdamState<S> {
    pub fn new() -> Self {
        AdamState {
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u32 {
        self.t
    }

    /// One update over all parameters; the step counter advances once per
    /// call. `grads[i]` must match `params[i]` elementwise.
    pub fn step(
        &mut self,
        params: &mut [&mut Tensor<S>],
        grads: &[&[S]],
        hp: &AdamHyper,
    ) -> Result<()> {
        if params.len() != grads.len() {
            return Err(PclError::dimension("adam_step", "params/grads count"));
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![S::zero(); p.numel()]).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len() {
            return Err(PclError::dimension("adam_step", "state/params count"));
        }
        self.t += 1;
        let b1 = S::of(hp.beta1);
        let b2 = S::of(hp.beta2);
        let one = S::one();
        let lr = S::of(hp.lr);
        let eps = S::of(hp.eps);
        let wd = S::of(hp.weight_decay);
        let t = i32::try_from(self.t).expect("step count fits i32");
        let c1 = S::of(1.0 - hp.beta1.powi(t));
        let c2 = S::of(1.0 - hp.beta2.powi(t));

        for ((param, grad), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            if grad.len() != param.numel() {
                return Err(PclError::dimension("adam_step", "grad shape"));
            }
            let data = param.data_mut();
            for k in 0..data.len() {
                let g = grad[k] + wd * data[k];
                m[k] = b1 * m[k] + (one - b1) * g;
                v[k] = b2 * v[k] + (one - b2) * g * g;
                let m_hat = m[k] / c1;
                let v_hat = v[k] / c2;
                data[k] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

impl<S: Scalar> Default for AdamState<S> {
    fn default() -> Self {
        Self::new()
    }
}
