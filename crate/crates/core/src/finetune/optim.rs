use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Cosine decay from `lr_init` at step 0 to 0 at `total_steps`.
pub fn cosine_lr(lr_init: f64, step: usize, total_steps: usize) -> f64 {
    if total_steps == 0 {
        return lr_init;
    }
    let t = step.min(total_steps) as f64 / total_steps as f64;
    lr_init * 0.5 * (1.0 + (PI * t).cos())
}

/// AdamW with decoupled weight decay, one moment buffer per parameter slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(sizes: &[usize], weight_decay: f64) -> Self {
        AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            t: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// Advance the step counter. Call once per optimizer step, before
    /// updating the slices.
    pub fn begin_step(&mut self) {
        self.t += 1;
    }

    /// Update slice `slot` in place.
    pub fn update(&mut self, slot: usize, params: &mut [f64], grad: &[f64], lr: f64) {
        let t = self.t.max(1) as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (m, v) = (&mut self.m[slot], &mut self.v[slot]);
        for i in 0..params.len() {
            let g = grad[i];
            m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
            v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
            let mhat = m[i] / bc1;
            let vhat = v[i] / bc2;
            params[i] -= lr * self.weight_decay * params[i];
            params[i] -= lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}
