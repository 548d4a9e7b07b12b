//! Metrics, file formats and command implementations.

pub mod checkpoint;
pub mod config;
pub mod evaluate;
pub mod metrics;

pub use checkpoint::{Checkpoint, CheckpointMeta};
pub use config::{DataConfig, EvalConfig, RunConfig};
pub use evaluate::{
    evaluate, evaluation_lattice, held_out_residual, predict_forward, predict_inverse, EvalOptions,
    EvalReport, SampleReport,
};
pub use metrics::{coverage_2sigma, mnse, nse, MnseSummary};
