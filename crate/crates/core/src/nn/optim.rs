use serde::{Deserialize, Serialize};

use super::{Grads, Network};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamSettings {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamSettings {
    fn default() -> Self {
        Self::regression(2e-4)
    }
}

impl AdamSettings {
    /// Regression-style defaults used for supervised source training.
    pub fn regression(lr: f64) -> Self {
        AdamSettings { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    /// GAN-style defaults used for the adversarial stage.
    pub fn adversarial(lr: f64) -> Self {
        AdamSettings { lr, beta1: 0.5, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam with first/second moment buffers shaped like the network.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub settings: AdamSettings,
    step: i32,
    m: Grads<T>,
    v: Grads<T>,
}

impl<T: Real> Adam<T> {
    pub fn new<N: Network<T>>(net: &N, settings: AdamSettings) -> Self {
        Adam { settings, step: 0, m: net.zero_grads(), v: net.zero_grads() }
    }

    pub fn steps_taken(&self) -> i32 {
        self.step
    }

    /// One update at learning rate `lr`; blocks with a `false` mask entry are
    /// left untouched, moments included. A zero rate leaves every parameter
    /// bit-identical.
    pub fn step<N: Network<T>>(&mut self, net: &mut N, grads: &Grads<T>, mask: Option<&[bool]>, lr: f64) {
        self.step += 1;
        if lr == 0.0 {
            return;
        }
        let s = self.settings;
        let (b1, b2) = (T::lit(s.beta1), T::lit(s.beta2));
        let bc1 = 1.0 - s.beta1.powi(self.step);
        let bc2 = 1.0 - s.beta2.powi(self.step);
        // lr * mhat / (sqrt(vhat) + eps) folded into one step size
        let step_size = T::lit(lr * bc2.sqrt() / bc1);
        let eps = T::lit(s.eps * bc2.sqrt());
        for (b, block) in net.blocks_mut().iter_mut().enumerate() {
            if mask.is_some_and(|m| !m[b]) {
                continue;
            }
            for (t, param) in block.params.iter_mut().enumerate() {
                let g = &grads[b][t];
                let m = &mut self.m[b][t];
                let v = &mut self.v[b][t];
                for i in 0..param.len() {
                    m[i] = b1 * m[i] + (T::one() - b1) * g[i];
                    v[i] = b2 * v[i] + (T::one() - b2) * g[i] * g[i];
                    param[i] -= step_size * m[i] / (v[i].sqrt() + eps);
                }
            }
        }
    }
}

/// Learning rate decaying linearly from `base` towards zero over `epochs`.
pub fn linear_decay(base: f64, epoch: usize, epochs: usize) -> f64 {
    if epochs == 0 {
        return base;
    }
    base * (1.0 - epoch as f64 / epochs as f64)
}
