//! Dense swish networks: plain evaluation, tape evaluation and jets.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::jet::{BatchJet, JetSpec, TapeJet};
use super::params::{ParamId, ParamStore};
use super::scalar::{swish, ScalarFn};
use super::tape::{Mat, Tape, Var};
use crate::error::{Error, Result};

/// Layer table of a multilayer perceptron whose tensors live in a [`ParamStore`].
///
/// Weights are stored `out x in`, biases `1 x out`. Hidden layers use swish,
/// the last layer is affine.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub widths: Vec<usize>,
    pub layers: Vec<(ParamId, ParamId)>,
}

impl Mlp {
    /// Registers a network with `widths = [in, h1, ..., out]`.
    ///
    /// Weights are LeCun-uniform (variance `1 / fan_in`), biases zero.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        widths: &[usize],
        rng: &mut R,
    ) -> Self {
        assert!(widths.len() >= 2 && widths.iter().all(|&w| w >= 1), "invalid widths {widths:?}");
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for (i, pair) in widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = (3.0 / fan_in as f64).sqrt();
            let w = store.add_uniform(format!("{name}.{i}.w"), fan_out, fan_in, bound, rng);
            let b = store.add(format!("{name}.{i}.b"), Array2::zeros((1, fan_out)));
            layers.push((w, b));
        }
        Self { widths: widths.to_vec(), layers }
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().expect("nonempty")
    }

    /// Id of the last layer's bias (used to shift output heads at init).
    pub fn output_bias(&self) -> ParamId {
        self.layers.last().expect("nonempty").1
    }

    fn check_input(&self, input: &Mat) -> Result<()> {
        if input.ncols() != self.input_width() {
            return Err(Error::Shape(format!(
                "network expects {} inputs, got {}",
                self.input_width(),
                input.ncols()
            )));
        }
        Ok(())
    }

    /// Deterministic forward pass over a batch of inputs (one per row).
    pub fn eval(&self, store: &ParamStore, input: &Mat) -> Result<Mat> {
        self.check_input(input)?;
        let last = self.layers.len() - 1;
        let mut h = input.clone();
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let z = h.dot(&store.get(w).t()) + store.get(b);
            h = if i < last { z.mapv(swish) } else { z };
        }
        Ok(h)
    }

    /// Forward pass recorded on the tape (values only).
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, input: Var) -> Var {
        let last = self.layers.len() - 1;
        let mut h = input;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let wv = tape.param(store, w);
            let bv = tape.param(store, b);
            let z = tape.matmul_t(h, wv);
            let z = tape.add_row(z, bv);
            h = if i < last { tape.map(z, ScalarFn::Swish, 0) } else { z };
        }
        h
    }

    /// Forward pass carrying second-order spatial jets on the tape.
    ///
    /// `input` rows are points; columns listed in `spec.wrt` are the
    /// coordinates being differentiated, the remaining columns are held fixed.
    pub fn forward_jet(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        input: &Mat,
        spec: &JetSpec,
    ) -> Result<TapeJet> {
        self.check_input(input)?;
        if let Some(&bad) = spec.wrt.iter().find(|&&k| k >= self.input_width()) {
            return Err(Error::Shape(format!("jet coordinate {bad} out of range")));
        }
        let n = input.nrows();
        let d = spec.dim();

        // first affine layer: d(xW^T)/dx_k is the k-th weight column on every row
        let (w0, b0) = self.layers[0];
        let x = tape.constant(input.clone());
        let wv = tape.param(store, w0);
        let bv = tape.param(store, b0);
        let z = tape.matmul_t(x, wv);
        let value = tape.add_row(z, bv);
        let grad = spec
            .wrt
            .iter()
            .map(|&k| {
                let mut e = Array2::zeros((1, self.input_width()));
                e[[0, k]] = 1.0;
                let e = tape.constant(e);
                let row = tape.matmul_t(e, wv);
                tape.broadcast_rows(row, n)
            })
            .collect();
        let n_pairs = if spec.mixed { spec.n_pairs() } else { 0 };
        let mut jet = TapeJet { value, grad, hess: vec![None; d], mixed: vec![None; n_pairs] };

        for &(w, b) in self.layers.iter().skip(1) {
            jet = jet.map(tape, ScalarFn::Swish, spec);
            let wv = tape.param(store, w);
            let bv = tape.param(store, b);
            let z = tape.matmul_t(jet.value, wv);
            let value = tape.add_row(z, bv);
            let grad = jet.grad.iter().map(|&g| tape.matmul_t(g, wv)).collect();
            let hess = jet.hess.iter().map(|h| h.map(|h| tape.matmul_t(h, wv))).collect();
            let mixed = jet.mixed.iter().map(|m| m.map(|m| tape.matmul_t(m, wv))).collect();
            jet = TapeJet { value, grad, hess, mixed };
        }
        Ok(jet)
    }

    /// Values and spatial derivatives of every output at every input row.
    pub fn eval_jet(&self, store: &ParamStore, input: &Mat, spec: &JetSpec) -> Result<BatchJet> {
        let mut tape = Tape::new();
        let jet = self.forward_jet(&mut tape, store, input, spec)?;
        Ok(BatchJet::from_tape(&tape, &jet))
    }
}
