//! Second-order forward jets recorded on a [`Tape`].
//!
//! A jet carries, for a batch of points (rows), the value of a vector-valued
//! map together with its first partials and pure second partials with respect
//! to selected input coordinates. Mixed second partials are tracked only when
//! [`JetSpec::mixed`] is set.

use ndarray::Array2;

use super::scalar::ScalarFn;
use super::tape::{Mat, Tape, Var};

/// Which input coordinates to differentiate and to what order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JetSpec {
    /// Input columns treated as spatio-temporal coordinates.
    pub wrt: Vec<usize>,
    /// `second[k]` requests the pure second partial for `wrt[k]`.
    pub second: Vec<bool>,
    /// Track mixed second partials for every pair `k < l`.
    pub mixed: bool,
}

impl JetSpec {
    /// First and pure second partials for every listed coordinate.
    pub fn full(wrt: Vec<usize>) -> Self {
        let second = vec![true; wrt.len()];
        Self { wrt, second, mixed: false }
    }

    pub fn with_mixed(mut self) -> Self {
        self.mixed = true;
        self
    }

    pub fn dim(&self) -> usize {
        self.wrt.len()
    }

    /// Number of unordered coordinate pairs.
    pub fn n_pairs(&self) -> usize {
        let d = self.dim();
        d * d.saturating_sub(1) / 2
    }
}

/// Position of pair `(k, l)` (any order, `k != l`) in the mixed list.
pub fn pair_index(d: usize, k: usize, l: usize) -> usize {
    let (a, b) = if k < l { (k, l) } else { (l, k) };
    // pairs are enumerated (0,1), (0,2), ..., (1,2), ...
    a * (2 * d - a - 1) / 2 + (b - a - 1)
}

/// Jet of a batch of values on the tape. `None` entries are identically zero.
#[derive(Clone, Debug)]
pub struct TapeJet {
    pub value: Var,
    pub grad: Vec<Var>,
    pub hess: Vec<Option<Var>>,
    pub mixed: Vec<Option<Var>>,
}

/// Jet values pulled off a tape.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchJet {
    pub value: Mat,
    pub grad: Vec<Mat>,
    pub hess: Vec<Option<Mat>>,
    pub mixed: Vec<Option<Mat>>,
}

impl BatchJet {
    pub fn from_tape(tape: &Tape, jet: &TapeJet) -> Self {
        let get = |v: &Option<Var>| v.map(|v| tape.value(v).clone());
        Self {
            value: tape.value(jet.value).clone(),
            grad: jet.grad.iter().map(|&g| tape.value(g).clone()).collect(),
            hess: jet.hess.iter().map(get).collect(),
            mixed: jet.mixed.iter().map(get).collect(),
        }
    }

    /// Pure second partial `k`, zero-filled when it was structurally zero.
    pub fn hess_or_zero(&self, k: usize) -> Mat {
        self.hess[k].clone().unwrap_or_else(|| Array2::zeros(self.value.dim()))
    }
}

fn add_opt(tape: &mut Tape, a: Option<Var>, b: Option<Var>) -> Option<Var> {
    match (a, b) {
        (Some(a), Some(b)) => Some(tape.add(a, b)),
        (Some(a), None) | (None, Some(a)) => Some(a),
        (None, None) => None,
    }
}

impl TapeJet {
    /// Applies `f` elementwise via the chain rule up to second order.
    pub fn map(&self, tape: &mut Tape, f: ScalarFn, spec: &JetSpec) -> TapeJet {
        let value = tape.map(self.value, f, 0);
        let d1 = tape.map(self.value, f, 1);
        let needs_second = spec.second.iter().any(|&s| s) || spec.mixed;
        let d2 = needs_second.then(|| tape.map(self.value, f, 2));

        let grad: Vec<Var> = self.grad.iter().map(|&g| tape.mul(d1, g)).collect();

        let mut hess = Vec::with_capacity(spec.dim());
        for k in 0..spec.dim() {
            if !spec.second[k] {
                hess.push(None);
                continue;
            }
            let d2 = d2.expect("second order requested");
            let gk = self.grad[k];
            let gg = tape.mul(gk, gk);
            let curv = tape.mul(d2, gg);
            let lin = self.hess[k].map(|h| tape.mul(d1, h));
            hess.push(add_opt(tape, Some(curv), lin));
        }

        let mut mixed = Vec::new();
        if spec.mixed {
            let d = spec.dim();
            let d2 = d2.expect("second order requested");
            for k in 0..d {
                for l in k + 1..d {
                    let gkl = tape.mul(self.grad[k], self.grad[l]);
                    let curv = tape.mul(d2, gkl);
                    let lin = self.mixed[pair_index(d, k, l)].map(|m| tape.mul(d1, m));
                    mixed.push(add_opt(tape, Some(curv), lin));
                }
            }
        }
        TapeJet { value, grad, hess, mixed }
    }

    /// Sum of two jets of equal shape.
    pub fn add(&self, tape: &mut Tape, other: &TapeJet) -> TapeJet {
        let value = tape.add(self.value, other.value);
        let grad = self.grad.iter().zip(&other.grad).map(|(&a, &b)| tape.add(a, b)).collect();
        let hess = self.hess.iter().zip(&other.hess).map(|(&a, &b)| add_opt(tape, a, b)).collect();
        let mixed =
            self.mixed.iter().zip(&other.mixed).map(|(&a, &b)| add_opt(tape, a, b)).collect();
        TapeJet { value, grad, hess, mixed }
    }

    /// Multiplies every component by a coordinate-independent constant of the
    /// same shape (e.g. frozen noise).
    pub fn mul_const(&self, tape: &mut Tape, c: Var) -> TapeJet {
        let value = tape.mul(self.value, c);
        let grad = self.grad.iter().map(|&g| tape.mul(g, c)).collect();
        let hess = self.hess.iter().map(|h| h.map(|h| tape.mul(h, c))).collect();
        let mixed = self.mixed.iter().map(|m| m.map(|m| tape.mul(m, c))).collect();
        TapeJet { value, grad, hess, mixed }
    }

    /// Right-multiplies every component by a coordinate-independent matrix.
    pub fn matmul_const(&self, tape: &mut Tape, c: Var) -> TapeJet {
        let value = tape.matmul(self.value, c);
        let grad = self.grad.iter().map(|&g| tape.matmul(g, c)).collect();
        let hess = self.hess.iter().map(|h| h.map(|h| tape.matmul(h, c))).collect();
        let mixed = self.mixed.iter().map(|m| m.map(|m| tape.matmul(m, c))).collect();
        TapeJet { value, grad, hess, mixed }
    }

    /// Column-wise concatenation of jets over the same rows.
    pub fn concat_cols(tape: &mut Tape, parts: &[TapeJet]) -> TapeJet {
        let cat = |tape: &mut Tape, vs: Vec<Var>| tape.concat_cols(&vs);
        let value = cat(tape, parts.iter().map(|p| p.value).collect());
        let d = parts[0].grad.len();
        let grad = (0..d).map(|k| cat(tape, parts.iter().map(|p| p.grad[k]).collect())).collect();
        let mut opt_cat = |pick: &dyn Fn(&TapeJet) -> Option<Var>| -> Option<Var> {
            if parts.iter().all(|p| pick(p).is_none()) {
                return None;
            }
            let vs = parts
                .iter()
                .map(|p| {
                    pick(p).unwrap_or_else(|| {
                        let shape = tape.shape(p.value);
                        tape.constant(Array2::zeros(shape))
                    })
                })
                .collect();
            Some(cat(tape, vs))
        };
        let hess = (0..d).map(|k| opt_cat(&|p: &TapeJet| p.hess[k])).collect();
        let n_pairs = parts[0].mixed.len();
        let mixed = (0..n_pairs).map(|k| opt_cat(&|p: &TapeJet| p.mixed[k])).collect();
        TapeJet { value, grad, hess, mixed }
    }

    pub fn slice_cols(&self, tape: &mut Tape, start: usize, end: usize) -> TapeJet {
        let value = tape.slice_cols(self.value, start, end);
        let grad = self.grad.iter().map(|&g| tape.slice_cols(g, start, end)).collect();
        let hess = self.hess.iter().map(|h| h.map(|h| tape.slice_cols(h, start, end))).collect();
        let mixed = self.mixed.iter().map(|m| m.map(|m| tape.slice_cols(m, start, end))).collect();
        TapeJet { value, grad, hess, mixed }
    }
}
