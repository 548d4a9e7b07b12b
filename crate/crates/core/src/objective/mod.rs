//! Evidence lower bound estimators and the training loop.

pub mod config;
pub mod dataset;
pub mod elbo;
pub mod model;
pub mod residual_op;
pub mod train;

pub use config::{ElboConfig, ElboMode, IndirectConfig, Observation, TrainConfig};
pub use dataset::{Dataset, Record};
pub use elbo::{
    data_estimate, data_record_tape, indirect_estimate, indirect_record_tape, physics_estimate,
    physics_sample_tape, step_batch, step_draws, step_estimate, Estimate, PhysicsDraw, SampleVars,
    Terms,
};
pub use model::{Model, ModelConfig, ResidualNoise};
pub use residual_op::residual_tape;
pub use train::{StepMetrics, Trainer, METRICS_HEADER};

#[cfg(test)]
mod tests;
