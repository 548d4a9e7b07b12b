use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::Mat;

/// Index of a trainable tensor inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// Flat registry of named trainable tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    tensors: Vec<Mat>,
    names: Vec<String>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Mat) -> ParamId {
        self.tensors.push(value);
        self.names.push(name.into());
        ParamId(self.tensors.len() - 1)
    }

    /// Registers an `rows x cols` tensor with entries uniform in `[-bound, bound]`.
    pub fn add_uniform<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        bound: f64,
        rng: &mut R,
    ) -> ParamId {
        let value = Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..=bound));
        self.add(name, value)
    }

    pub fn get(&self, id: ParamId) -> &Mat {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Mat {
        &mut self.tensors[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Mat] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Mat] {
        &mut self.tensors
    }

    /// Total number of scalars.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    /// Reads scalar `k` of the flattened parameter vector.
    pub fn flat_get(&self, mut k: usize) -> f64 {
        for t in &self.tensors {
            if k < t.len() {
                return t.as_slice().expect("standard layout")[k];
            }
            k -= t.len();
        }
        panic!("flat index out of range")
    }

    pub fn flat_set(&mut self, mut k: usize, value: f64) {
        for t in &mut self.tensors {
            if k < t.len() {
                t.as_slice_mut().expect("standard layout")[k] = value;
                return;
            }
            k -= t.len();
        }
        panic!("flat index out of range")
    }

    /// Flat offset of the first scalar of `id`.
    pub fn flat_offset(&self, id: ParamId) -> usize {
        self.tensors[..id.0].iter().map(|t| t.len()).sum()
    }
}

/// Gradient bundle shaped like a [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrads {
    grads: Vec<Mat>,
}

impl ParamGrads {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Self { grads: store.tensors.iter().map(|t| Array2::zeros(t.dim())).collect() }
    }

    pub fn get(&self, id: ParamId) -> &Mat {
        &self.grads[id.0]
    }

    pub fn add_to(&mut self, id: ParamId, g: &Mat) {
        self.grads[id.0] += g;
    }

    /// `self += other`, tensor by tensor in index order.
    pub fn accumulate(&mut self, other: &ParamGrads) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            *a += b;
        }
    }

    pub fn scale(&mut self, k: f64) {
        for g in &mut self.grads {
            g.mapv_inplace(|x| x * k);
        }
    }

    pub fn tensors(&self) -> &[Mat] {
        &self.grads
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    pub fn flat_get(&self, mut k: usize) -> f64 {
        for t in &self.grads {
            if k < t.len() {
                return t.as_slice().expect("standard layout")[k];
            }
            k -= t.len();
        }
        panic!("flat index out of range")
    }

    pub fn norm(&self) -> f64 {
        self.grads.iter().flat_map(|t| t.iter()).map(|x| x * x).sum::<f64>().sqrt()
    }
}
