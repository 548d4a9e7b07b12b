//! Adam with bias correction and an exponentially decaying step size.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::params::{ParamGrads, ParamStore};
use super::tape::Mat;
use crate::error::{Error, Result};

/// `lr(t) = lr0 * gamma^(t / decay_steps)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrSchedule {
    pub lr0: f64,
    pub gamma: f64,
    pub decay_steps: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self { lr0: 1e-3, gamma: 0.9, decay_steps: 1000.0 }
    }
}

impl LrSchedule {
    pub fn at(&self, step: u64) -> f64 {
        self.lr0 * self.gamma.powf(step as f64 / self.decay_steps)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Mat>,
    pub v: Vec<Mat>,
    /// Number of updates applied so far.
    pub step: u64,
    pub schedule: LrSchedule,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(store: &ParamStore, schedule: LrSchedule) -> Self {
        let zeros: Vec<Mat> = store.tensors().iter().map(|t| Array2::zeros(t.dim())).collect();
        Self { m: zeros.clone(), v: zeros, step: 0, schedule, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    /// Learning rate used by the next update.
    pub fn current_lr(&self) -> f64 {
        self.schedule.at(self.step)
    }

    /// One descent step on `store` along `grads`.
    pub fn update(&mut self, store: &mut ParamStore, grads: &ParamGrads) -> Result<()> {
        if !grads.is_finite() {
            return Err(Error::Divergence {
                step: self.step as usize,
                detail: "non-finite gradient".into(),
            });
        }
        if grads.tensors().len() != self.m.len() || store.len() != self.m.len() {
            return Err(Error::Shape("optimizer state does not match parameters".into()));
        }
        let lr = self.current_lr();
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        for (((p, g), m), v) in
            store.tensors_mut().iter_mut().zip(grads.tensors()).zip(&mut self.m).zip(&mut self.v)
        {
            if p.dim() != g.dim() {
                return Err(Error::Shape("gradient shape differs from parameter".into()));
            }
            ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let mh = *m / c1;
                let vh = *v / c2;
                *p -= lr * mh / (vh.sqrt() + eps);
            });
        }
        Ok(())
    }
}
