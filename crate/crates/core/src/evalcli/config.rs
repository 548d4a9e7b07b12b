//! Run configuration file: one TOML table per section.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::emulator::{AlphaConfig, GicConfig};
use crate::error::{Error, Result};
use crate::objective::{ElboConfig, ModelConfig, TrainConfig};
use crate::pde::ProblemConfig;

fn d_records() -> usize {
    1000
}
fn d_points() -> usize {
    60
}
fn d_sigma_n() -> f64 {
    0.05
}

/// `[data]` section: dataset used by data modes and `make-dataset` sizes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Dataset file, relative to the configuration file.
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default = "d_records")]
    pub n_records: usize,
    #[serde(default = "d_points")]
    pub points_per_record: usize,
    #[serde(default = "d_sigma_n")]
    pub sigma_n: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

fn d_n_test() -> usize {
    100
}

/// `[eval]` section.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(default = "d_n_test")]
    pub n_test: usize,
    /// Per-component `[lo, hi]` replacing the prior of `z`.
    #[serde(default)]
    pub z_range: Option<Vec<[f64; 2]>>,
    /// Inverse-network grid size; the training collocation size when absent.
    #[serde(default)]
    pub inverse_points: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    #[serde(default)]
    pub alpha: AlphaConfig,
    #[serde(default)]
    pub beta: Option<GicConfig>,
    #[serde(default)]
    pub elbo: ElboConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub data: DataConfig,
    /// Directory of the file the configuration was read from.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn model(&self) -> ModelConfig {
        ModelConfig { problem: self.problem.clone(), alpha: self.alpha.clone(), beta: self.beta.clone() }
    }

    pub fn dataset_path(&self) -> Option<PathBuf> {
        self.data.path.as_ref().map(|p| if p.is_absolute() { p.clone() } else { self.base_dir.join(p) })
    }
}
