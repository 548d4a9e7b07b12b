//! Stochastic optimization of the ELBO with Adam.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::engine::AdamState;
use crate::error::{Error, Result};
use crate::evalcli::checkpoint::Checkpoint;

use super::config::{ElboConfig, ElboMode, TrainConfig};
use super::dataset::Dataset;
use super::elbo::{step_estimate, Terms};
use super::model::{Model, ModelConfig};

/// Resampling attempts after the first non-finite estimate of a step.
pub const MAX_RETRIES: u64 = 3;

pub const METRICS_HEADER: &str =
    "step,elbo,residual_term,beta_term,entropy_term,data_term,eps_r,lr,wall_ms";

#[derive(Clone, Debug, PartialEq)]
pub struct StepMetrics {
    /// Number of completed updates.
    pub step: u64,
    pub terms: Terms,
    /// Residual noise after the update.
    pub eps_r: f64,
    /// Learning rate used by the update.
    pub lr: f64,
    pub wall_ms: f64,
    pub attempts: u64,
}

impl StepMetrics {
    pub fn csv_row(&self) -> String {
        let t = &self.terms;
        format!(
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:.3}",
            self.step,
            t.elbo(),
            t.residual,
            t.beta,
            t.entropy,
            t.data,
            self.eps_r,
            self.lr,
            self.wall_ms
        )
    }
}

/// Model, optimizer state and everything needed to continue a run.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub model: Model,
    pub adam: AdamState,
    pub elbo: ElboConfig,
    pub train: TrainConfig,
    pub seed: u64,
    pub dataset: Option<Dataset>,
}

impl Trainer {
    pub fn new(
        model: &ModelConfig,
        elbo: &ElboConfig,
        train: &TrainConfig,
        seed: u64,
        dataset: Option<Dataset>,
    ) -> Result<Self> {
        train.validate()?;
        let model = Model::new(model, elbo, seed)?;
        if elbo.mode != ElboMode::Physics {
            let ds = dataset.as_ref().ok_or_else(|| Error::Config("data mode requires a dataset".into()))?;
            ds.validate(&model.problem, elbo.mode == ElboMode::PhysicsData)?;
            if elbo.batch_size > ds.len() {
                return Err(Error::Config("elbo.batch_size exceeds the dataset size".into()));
            }
        }
        let adam = AdamState::new(&model.store, train.schedule());
        Ok(Self { model, adam, elbo: elbo.clone(), train: train.clone(), seed, dataset })
    }

    pub fn step_count(&self) -> u64 {
        self.adam.step
    }

    /// One Adam update, resampling the Monte-Carlo batch on divergence.
    pub fn step(&mut self) -> Result<StepMetrics> {
        let start = Instant::now();
        let step = self.adam.step;
        let mut last = String::new();
        for attempt in 0..=MAX_RETRIES {
            let est = step_estimate(
                &self.model,
                &self.elbo,
                self.dataset.as_ref(),
                self.seed,
                step,
                attempt,
                true,
            );
            let est = match est {
                Ok(e) => e,
                Err(e @ (Error::Divergence { .. } | Error::Residual { .. })) => {
                    log::warn!("step {step} attempt {attempt}: {e}");
                    last = e.to_string();
                    continue;
                }
                Err(e) => return Err(e),
            };
            let lr = self.adam.current_lr();
            let grads = est.grads.expect("gradients requested");
            self.adam.update(&mut self.model.store, &grads)?;
            return Ok(StepMetrics {
                step: self.adam.step,
                terms: est.terms,
                eps_r: self.model.eps_r(),
                lr,
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
                attempts: attempt + 1,
            });
        }
        Err(Error::Divergence { step: step as usize, detail: last })
    }

    /// Trains until `train.steps` updates have been applied. With `out_dir`,
    /// writes `metrics.csv`, periodic `checkpoint-<step>.rgnp` files and a
    /// final `checkpoint.rgnp`.
    pub fn run(&mut self, out_dir: Option<&Path>, mut on_step: impl FnMut(&StepMetrics)) -> Result<()> {
        let mut metrics = match out_dir {
            Some(dir) => {
                std::fs::create_dir_all(dir)?;
                let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("metrics.csv"))?);
                writeln!(f, "{METRICS_HEADER}")?;
                Some(f)
            }
            None => None,
        };
        let mut last_good: Option<PathBuf> = None;
        while self.adam.step < self.train.steps {
            let m = match self.step() {
                Ok(m) => m,
                Err(Error::Divergence { step, detail }) => {
                    let at = last_good
                        .as_ref()
                        .map_or("none".to_string(), |p| p.display().to_string());
                    return Err(Error::Divergence {
                        step,
                        detail: format!("{detail}; last good checkpoint: {at}"),
                    });
                }
                Err(e) => return Err(e),
            };
            if let Some(f) = metrics.as_mut() {
                if m.step % self.train.log_every == 0 || m.step == self.train.steps {
                    writeln!(f, "{}", m.csv_row())?;
                }
            }
            on_step(&m);
            if let Some(dir) = out_dir {
                let k = self.train.checkpoint_every;
                if k > 0 && m.step % k == 0 {
                    let path = dir.join(format!("checkpoint-{}.rgnp", m.step));
                    Checkpoint::from_trainer(self).save(&path)?;
                    last_good = Some(path);
                }
            }
        }
        if let Some(mut f) = metrics {
            f.flush()?;
        }
        if let Some(dir) = out_dir {
            Checkpoint::from_trainer(self).save(&dir.join("checkpoint.rgnp"))?;
        }
        Ok(())
    }
}
