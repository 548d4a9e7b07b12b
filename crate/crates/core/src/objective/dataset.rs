//! Observation records and their binary container.
//!
//! Layout (little-endian): magic `RGND`, `u32` version, `u32` spatial
//! dimension, `u64` record count; per record `u64` dim(z), dim(w), point
//! count, then `f64` z, w, points (row-major) and observations; footer `f64`
//! noise level and `u64` seed.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::engine::Mat;
use crate::error::{Error, Result};
use crate::pde::Problem;

pub const DATASET_MAGIC: &[u8; 4] = b"RGND";
pub const DATASET_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub z: Vec<f64>,
    pub w: Vec<f64>,
    /// One point per row.
    pub x: Mat,
    pub y: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub records: Vec<Record>,
    pub sigma_n: f64,
    pub seed: u64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Checks shapes against `problem`. Observations of the raw point values
    /// (`observed_per_point`) must have one entry per point.
    pub fn validate(&self, problem: &Problem, observed_per_point: bool) -> Result<()> {
        if self.records.is_empty() {
            return Err(Error::Config("dataset is empty".into()));
        }
        if !(self.sigma_n > 0.0 && self.sigma_n.is_finite()) {
            return Err(Error::Config("dataset noise level must be positive".into()));
        }
        for (i, r) in self.records.iter().enumerate() {
            let bad = r.z.len() != problem.n_z()
                || r.w.len() != problem.n_w()
                || r.x.ncols() != problem.dim()
                || r.x.nrows() == 0
                || (observed_per_point && r.y.len() != r.x.nrows());
            if bad {
                return Err(Error::Shape(format!("dataset record {i} does not fit the problem")));
            }
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let dim = self.records.first().map_or(0, |r| r.x.ncols());
        out.write_all(DATASET_MAGIC)?;
        out.write_all(&DATASET_VERSION.to_le_bytes())?;
        out.write_all(&(dim as u32).to_le_bytes())?;
        out.write_all(&(self.records.len() as u64).to_le_bytes())?;
        for r in &self.records {
            if r.x.ncols() != dim || r.y.len() != r.x.nrows() {
                return Err(Error::Shape("dataset records are inconsistent".into()));
            }
            for n in [r.z.len(), r.w.len(), r.x.nrows()] {
                out.write_all(&(n as u64).to_le_bytes())?;
            }
            for v in r.z.iter().chain(&r.w).chain(r.x.iter()).chain(&r.y) {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        out.write_all(&self.sigma_n.to_le_bytes())?;
        out.write_all(&self.seed.to_le_bytes())?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != DATASET_MAGIC {
            return Err(Error::Format("not a dataset file".into()));
        }
        let version = read_u32(&mut input)?;
        if version != DATASET_VERSION {
            return Err(Error::Format(format!("unsupported dataset version {version}")));
        }
        let dim = read_u32(&mut input)? as usize;
        let count = read_u64(&mut input)?;
        let mut records = Vec::new();
        for _ in 0..count {
            let nz = read_len(&mut input)?;
            let nw = read_len(&mut input)?;
            let np = read_len(&mut input)?;
            let z = read_f64s(&mut input, nz)?;
            let w = read_f64s(&mut input, nw)?;
            let xs = read_f64s(&mut input, np * dim)?;
            let x = Array2::from_shape_vec((np, dim), xs).map_err(|e| Error::Format(e.to_string()))?;
            let y = read_f64s(&mut input, np)?;
            records.push(Record { z, w, x, y });
        }
        let sigma_n = read_f64s(&mut input, 1)?[0];
        let seed = read_u64(&mut input)?;
        let mut rest = Vec::new();
        input.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::Format("trailing bytes after dataset footer".into()));
        }
        Ok(Self { records, sigma_n, seed })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(f))
    }
}

fn map_eof(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("truncated file".into())
    } else {
        Error::Io(e)
    }
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(map_eof)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(map_eof)?;
    Ok(u64::from_le_bytes(b))
}

fn read_len<R: Read>(r: &mut R) -> Result<usize> {
    let n = read_u64(r)?;
    if n > (1 << 32) {
        return Err(Error::Format(format!("implausible length {n}")));
    }
    Ok(n as usize)
}

pub(crate) fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf).map_err(map_eof)?;
    Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
}
