//! Checkpoint container.
//!
//! Layout (little-endian): magic `RGNP`, `u32` version, `u64` metadata
//! length, UTF-8 JSON metadata, `u64` tensor count, a `(u64 rows, u64 cols)`
//! shape table, then every tensor as row-major `f64`. Tensors are the
//! parameters followed by the Adam first and second moments.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::engine::{AdamState, Mat};
use crate::error::{Error, Result};
use crate::objective::dataset::{read_f64s, read_u32, read_u64};
use crate::objective::{Dataset, ElboConfig, Model, ModelConfig, TrainConfig, Trainer};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"RGNP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub problem: String,
    pub model: ModelConfig,
    pub elbo: ElboConfig,
    pub train: TrainConfig,
    pub step: u64,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub param_names: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub params: Vec<Mat>,
    pub adam_m: Vec<Mat>,
    pub adam_v: Vec<Mat>,
}

impl Checkpoint {
    pub fn from_trainer(t: &Trainer) -> Self {
        let meta = CheckpointMeta {
            problem: t.model.problem.name().to_string(),
            model: t.model.config.clone(),
            elbo: t.elbo.clone(),
            train: t.train.clone(),
            step: t.adam.step,
            seed: t.seed,
            adam_beta1: t.adam.beta1,
            adam_beta2: t.adam.beta2,
            adam_eps: t.adam.eps,
            param_names: t.model.store.names().to_vec(),
        };
        Self {
            meta,
            params: t.model.store.tensors().to_vec(),
            adam_m: t.adam.m.clone(),
            adam_v: t.adam.v.clone(),
        }
    }

    /// Rebuilds the networks from the stored configuration and installs the
    /// stored parameters and optimizer state.
    pub fn into_trainer(self, dataset: Option<Dataset>) -> Result<Trainer> {
        let m = &self.meta;
        let mut t = Trainer::new(&m.model, &m.elbo, &m.train, m.seed, dataset)?;
        if t.model.store.names() != m.param_names.as_slice() {
            return Err(Error::Format("checkpoint parameters do not match the architecture".into()));
        }
        for (dst, src) in t.model.store.tensors_mut().iter_mut().zip(&self.params) {
            if dst.dim() != src.dim() {
                return Err(Error::Format("checkpoint tensor shape mismatch".into()));
            }
            dst.assign(src);
        }
        t.adam = AdamState {
            m: self.adam_m,
            v: self.adam_v,
            step: m.step,
            schedule: m.train.schedule(),
            beta1: m.adam_beta1,
            beta2: m.adam_beta2,
            eps: m.adam_eps,
        };
        Ok(t)
    }

    /// Model only (no dataset check, no optimizer state).
    pub fn model(&self) -> Result<Model> {
        let mut model = Model::new(&self.meta.model, &self.meta.elbo, self.meta.seed)?;
        if model.store.names() != self.meta.param_names.as_slice() {
            return Err(Error::Format("checkpoint parameters do not match the architecture".into()));
        }
        for (dst, src) in model.store.tensors_mut().iter_mut().zip(&self.params) {
            if dst.dim() != src.dim() {
                return Err(Error::Format("checkpoint tensor shape mismatch".into()));
            }
            dst.assign(src);
        }
        Ok(model)
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(CHECKPOINT_MAGIC)?;
        out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        let meta = serde_json::to_vec(&self.meta)?;
        out.write_all(&(meta.len() as u64).to_le_bytes())?;
        out.write_all(&meta)?;
        let tensors: Vec<&Mat> = self.params.iter().chain(&self.adam_m).chain(&self.adam_v).collect();
        out.write_all(&(tensors.len() as u64).to_le_bytes())?;
        for t in &tensors {
            out.write_all(&(t.nrows() as u64).to_le_bytes())?;
            out.write_all(&(t.ncols() as u64).to_le_bytes())?;
        }
        for t in &tensors {
            for v in t.iter() {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a checkpoint file".into()));
        }
        let version = read_u32(&mut input)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let len = read_u64(&mut input)?;
        if len > (1 << 30) {
            return Err(Error::Format("implausible metadata length".into()));
        }
        let mut meta = vec![0u8; len as usize];
        input.read_exact(&mut meta)?;
        let meta: CheckpointMeta = serde_json::from_slice(&meta)?;
        let count = read_u64(&mut input)? as usize;
        let n = meta.param_names.len();
        if count != 3 * n {
            return Err(Error::Format("tensor count does not match parameter names".into()));
        }
        let mut shapes = Vec::with_capacity(count);
        for _ in 0..count {
            let r = read_u64(&mut input)? as usize;
            let c = read_u64(&mut input)? as usize;
            if r.saturating_mul(c) > (1 << 32) {
                return Err(Error::Format("implausible tensor shape".into()));
            }
            shapes.push((r, c));
        }
        let mut tensors = Vec::with_capacity(count);
        for (r, c) in shapes {
            let data = read_f64s(&mut input, r * c)?;
            tensors.push(Array2::from_shape_vec((r, c), data).map_err(|e| Error::Format(e.to_string()))?);
        }
        let mut rest = Vec::new();
        input.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::Format("trailing bytes after checkpoint".into()));
        }
        let adam_v = tensors.split_off(2 * n);
        let adam_m = tensors.split_off(n);
        Ok(Self { meta, params: tensors, adam_m, adam_v })
    }

    pub fn meta_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.meta)?)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        Ok(buf)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::read_from(&bytes[..])
    }
}
