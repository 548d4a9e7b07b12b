//! `[elbo]` and `[train]` configuration sections.

use serde::{Deserialize, Serialize};

use crate::engine::{ExpLinearBounds, LrSchedule};
use crate::error::{Error, Result};
use crate::pde::{Problem, ProblemKind};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ElboMode {
    #[default]
    Physics,
    PhysicsData,
    Indirect,
}

/// Observation functional of the indirect likelihood.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Observation {
    #[default]
    Identity,
    MeanOfField,
    PointwiseSquare,
}

impl Observation {
    /// Applies the functional to one field sample.
    pub fn apply(self, u: &[f64]) -> Vec<f64> {
        match self {
            Observation::Identity => u.to_vec(),
            Observation::MeanOfField => vec![u.iter().sum::<f64>() / u.len() as f64],
            Observation::PointwiseSquare => u.iter().map(|x| x * x).collect(),
        }
    }

    /// Length of the observation for a field of `n` points.
    pub fn len(self, n: usize) -> usize {
        match self {
            Observation::MeanOfField => 1,
            _ => n,
        }
    }
}

fn d_eps_y() -> f64 {
    0.05
}
fn d_inner() -> usize {
    1
}

/// Noise model of indirect observations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndirectConfig {
    #[serde(default)]
    pub observation: Observation,
    #[serde(default = "d_eps_y")]
    pub eps_y: f64,
    #[serde(default)]
    pub eps_z: f64,
    #[serde(default)]
    pub eps_w: f64,
    #[serde(default)]
    pub eps_x: f64,
    /// Inner Monte-Carlo samples per record.
    #[serde(default = "d_inner")]
    pub inner_samples: usize,
}

impl Default for IndirectConfig {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

fn d_n_mc() -> usize {
    16
}
fn d_sigma_u() -> f64 {
    1e3
}
fn d_batch() -> usize {
    50
}
fn d_true() -> bool {
    true
}
fn d_eps_bounds() -> ExpLinearBounds {
    ExpLinearBounds { lo: 1e-3, hi: 1.0 }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElboConfig {
    #[serde(default)]
    pub mode: ElboMode,
    /// Monte-Carlo samples per step.
    #[serde(default = "d_n_mc")]
    pub n_mc: usize,
    /// Collocation points per sample; problem default when absent.
    #[serde(default)]
    pub n_collocation: Option<usize>,
    /// Residual noise (initial value when learnable); problem default when absent.
    #[serde(default)]
    pub eps_r: Option<f64>,
    #[serde(default)]
    pub learn_eps_r: Option<bool>,
    #[serde(default = "d_eps_bounds")]
    pub eps_r_bounds: ExpLinearBounds,
    /// Standard deviation of the broad Gaussian prior on raw field values.
    #[serde(default = "d_sigma_u")]
    pub sigma_u: f64,
    /// Records per data mini-batch.
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    /// Let the inverse-network term send gradients into the forward network
    /// through the sampled field.
    #[serde(default = "d_true")]
    pub beta_grad_to_alpha: bool,
    #[serde(default)]
    pub indirect: IndirectConfig,
}

impl Default for ElboConfig {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

impl ElboConfig {
    pub fn collocation(&self, problem: &Problem) -> usize {
        self.n_collocation.unwrap_or(match problem.kind {
            ProblemKind::Poisson1d => 30,
            ProblemKind::Burgers => 225,
            ProblemKind::NsLid => 512,
        })
    }

    pub fn eps_r(&self, problem: &Problem) -> f64 {
        self.eps_r.unwrap_or_else(|| problem.default_eps_r())
    }

    pub fn learn_eps_r(&self, problem: &Problem) -> bool {
        self.learn_eps_r.unwrap_or_else(|| problem.default_learn_eps_r())
    }

    pub fn validate(&self, problem: &Problem) -> Result<()> {
        if self.n_mc == 0 {
            return Err(Error::Config("elbo.n_mc must be at least 1".into()));
        }
        if self.collocation(problem) == 0 {
            return Err(Error::Config("elbo.n_collocation must be at least 1".into()));
        }
        let eps = self.eps_r(problem);
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::Config("elbo.eps_r must be positive".into()));
        }
        let b = self.eps_r_bounds;
        if ExpLinearBounds::new(b.lo, b.hi).is_none() {
            return Err(Error::Config("elbo.eps_r_bounds invalid".into()));
        }
        if self.learn_eps_r(problem) && !(eps > b.lo && eps < b.hi) {
            return Err(Error::Config("elbo.eps_r must lie inside eps_r_bounds".into()));
        }
        if !(self.sigma_u > 0.0) {
            return Err(Error::Config("elbo.sigma_u must be positive".into()));
        }
        if self.mode != ElboMode::Physics && self.batch_size == 0 {
            return Err(Error::Config("elbo.batch_size must be at least 1".into()));
        }
        let ind = &self.indirect;
        if self.mode == ElboMode::Indirect
            && (!(ind.eps_y > 0.0)
                || ind.eps_z < 0.0
                || ind.eps_w < 0.0
                || ind.eps_x < 0.0
                || ind.inner_samples == 0)
        {
            return Err(Error::Config("elbo.indirect: eps_y > 0, other scales >= 0".into()));
        }
        Ok(())
    }
}

fn d_steps() -> u64 {
    5000
}
fn d_lr() -> f64 {
    1e-3
}
fn d_gamma() -> f64 {
    0.9
}
fn d_decay() -> f64 {
    1000.0
}
fn d_log_every() -> u64 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "d_steps")]
    pub steps: u64,
    #[serde(default = "d_lr")]
    pub lr: f64,
    /// Learning rate multiplier per `lr_decay_steps` steps.
    #[serde(default = "d_gamma")]
    pub lr_gamma: f64,
    #[serde(default = "d_decay")]
    pub lr_decay_steps: f64,
    /// Checkpoint period in steps; zero writes only the final checkpoint.
    #[serde(default)]
    pub checkpoint_every: u64,
    /// Metrics row period in steps.
    #[serde(default = "d_log_every")]
    pub log_every: u64,
    /// Master seed, overridden by `--seed`.
    #[serde(default)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

impl TrainConfig {
    pub fn schedule(&self) -> LrSchedule {
        LrSchedule { lr0: self.lr, gamma: self.lr_gamma, decay_steps: self.lr_decay_steps }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("train.steps must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr_gamma > 0.0 && self.lr_decay_steps > 0.0) {
            return Err(Error::Config("train: lr, lr_gamma and lr_decay_steps must be positive".into()));
        }
        if self.log_every == 0 {
            return Err(Error::Config("train.log_every must be at least 1".into()));
        }
        Ok(())
    }
}
