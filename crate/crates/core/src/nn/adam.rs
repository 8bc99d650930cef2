//! Adaptive-moment gradient descent.
//!
//! Row-sparse gradients update only the touched rows (lazy moments), which
//! keeps large embedding tables cheap to train.

use super::params::ParamStore;
use super::tape::{Gradients, ParamGrad};

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm clip; `0` disables clipping.
    pub clip_norm: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: 0.0,
            step: 0,
            m: store.iter().map(|(_, _, t)| vec![0.0; t.len()]).collect(),
            v: store.iter().map(|(_, _, t)| vec![0.0; t.len()]).collect(),
        }
    }

    pub fn with_clip(mut self, clip_norm: f64) -> Self {
        self.clip_norm = clip_norm;
        self
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) {
        self.step += 1;
        let scale = if self.clip_norm > 0.0 {
            let n = grads.global_norm();
            if n > self.clip_norm {
                self.clip_norm / n
            } else {
                1.0
            }
        } else {
            1.0
        };
        let t = self.step as f64;
        let bc1 = 1.0 - self.beta1.powf(t);
        let bc2 = 1.0 - self.beta2.powf(t);
        let lr_t = self.lr * bc2.sqrt() / bc1;
        for (id, g) in grads.iter() {
            let tensor = store.get_mut(id);
            let cols = tensor.cols;
            let m = &mut self.m[id];
            let v = &mut self.v[id];
            let mut update = |k: usize, gk: f64, data: &mut [f64]| {
                let gk = gk * scale;
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * gk;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * gk * gk;
                data[k] -= lr_t * m[k] / (v[k].sqrt() + self.eps);
            };
            match g {
                ParamGrad::Dense(d) => {
                    for (k, gk) in d.iter().enumerate() {
                        update(k, *gk, &mut tensor.data);
                    }
                }
                ParamGrad::Rows(rows) => {
                    for (r, gr) in rows {
                        for (j, gk) in gr.iter().enumerate() {
                            update(r * cols + j, *gk, &mut tensor.data);
                        }
                    }
                }
            }
        }
    }
}
