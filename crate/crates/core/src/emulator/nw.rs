//! Nadaraya-Watson interpolation of scattered values onto a fixed lattice.
//!
//! Weights are normalized after subtracting the largest log-weight, so the
//! result is an exact convex combination even when every raw kernel value
//! underflows.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::engine::{CustomOp, Mat, Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum KernelFamily {
    /// `exp(-r^2 / (2 l^2))`
    #[default]
    Rbf,
    /// `(1 + s) exp(-s)` with `s = sqrt(3) r / l`
    Matern32,
}

impl KernelFamily {
    /// Log-weight and its derivative with respect to `log l`, from the
    /// squared distance.
    #[inline]
    fn log_weight(self, dist2: f64, ls: f64) -> (f64, f64) {
        match self {
            KernelFamily::Rbf => {
                let q = dist2 / (ls * ls);
                (-0.5 * q, q)
            }
            KernelFamily::Matern32 => {
                let s = 3f64.sqrt() * dist2.sqrt() / ls;
                ((1.0 + s).ln() - s, s * s / (1.0 + s))
            }
        }
    }
}

/// Squared distances, `lattice x points`.
pub fn pairwise_dist2(lattice: &Mat, points: &Mat) -> Mat {
    Array2::from_shape_fn((lattice.nrows(), points.nrows()), |(j, i)| {
        lattice.row(j).iter().zip(points.row(i)).map(|(a, b)| (a - b) * (a - b)).sum()
    })
}

/// Normalized weights of one lattice site into `p`; returns nothing.
fn weights(kernel: KernelFamily, dist2: &[f64], ls: f64, p: &mut [f64]) {
    let mut max = f64::NEG_INFINITY;
    for (pi, &d) in p.iter_mut().zip(dist2) {
        *pi = kernel.log_weight(d, ls).0;
        max = max.max(*pi);
    }
    let mut total = 0.0;
    for pi in p.iter_mut() {
        *pi = (*pi - max).exp();
        total += *pi;
    }
    p.iter_mut().for_each(|pi| *pi /= total);
}

/// Interpolates `values` (`n x C`, one channel per column) given at `points`
/// onto `lattice` (`m x d`) with one lengthscale per channel. Returns `m x C`.
pub fn nw_interpolate(
    kernel: KernelFamily,
    values: &Mat,
    points: &Mat,
    lattice: &Mat,
    lengthscales: &[f64],
) -> Mat {
    let dist2 = pairwise_dist2(lattice, points);
    nw_with_dist(kernel, values, &dist2, lengthscales)
}

fn nw_with_dist(kernel: KernelFamily, values: &Mat, dist2: &Mat, ls: &[f64]) -> Mat {
    let (m, n) = dist2.dim();
    let c = values.ncols();
    let mut out = Array2::zeros((m, c));
    let mut p = vec![0.0; n];
    for ch in 0..c {
        for j in 0..m {
            weights(kernel, dist2.row(j).as_slice().expect("contiguous"), ls[ch], &mut p);
            out[[j, ch]] = p.iter().zip(values.column(ch)).map(|(a, b)| a * b).sum();
        }
    }
    out
}

struct NwOp {
    kernel: KernelFamily,
    dist2: Mat,
}

impl CustomOp for NwOp {
    fn backward(&self, inputs: &[&Mat], output: &Mat, grad: &Mat) -> Vec<Option<Mat>> {
        let (values, log_ls) = (inputs[0], inputs[1]);
        let (m, n) = self.dist2.dim();
        let c = values.ncols();
        let mut dv = Array2::zeros((n, c));
        let mut dls = Array2::zeros((1, c));
        let mut p = vec![0.0; n];
        for ch in 0..c {
            let ls = log_ls[[0, ch]].exp();
            for j in 0..m {
                let g = grad[[j, ch]];
                if g == 0.0 {
                    continue;
                }
                let row = self.dist2.row(j);
                weights(self.kernel, row.as_slice().expect("contiguous"), ls, &mut p);
                let out = output[[j, ch]];
                let mut acc = 0.0;
                for i in 0..n {
                    dv[[i, ch]] += g * p[i];
                    let dlog = self.kernel.log_weight(row[i], ls).1;
                    acc += p[i] * (values[[i, ch]] - out) * dlog;
                }
                dls[[0, ch]] += g * acc;
            }
        }
        vec![Some(dv), Some(dls)]
    }
}

/// Tape version with trainable log-lengthscales (`1 x C`).
pub fn nw_tape(
    tape: &mut Tape,
    kernel: KernelFamily,
    values: Var,
    points: &Mat,
    lattice: &Mat,
    log_ls: Var,
) -> Var {
    let dist2 = pairwise_dist2(lattice, points);
    let ls: Vec<f64> = tape.value(log_ls).iter().map(|v| v.exp()).collect();
    let out = nw_with_dist(kernel, tape.value(values), &dist2, &ls);
    tape.custom(&[values, log_ls], out, Box::new(NwOp { kernel, dist2 }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn single_point_is_copied_everywhere() {
        let lattice = array![[0.0], [0.5], [1.0]];
        let out = nw_interpolate(KernelFamily::Rbf, &array![[2.5]], &array![[0.3]], &lattice, &[0.01]);
        assert!(out.iter().all(|&v| v == 2.5));
    }

    #[test]
    fn huge_lengthscale_gives_mean() {
        let values = array![[1.0], [2.0], [6.0]];
        let points = array![[0.1], [0.4], [0.9]];
        let out = nw_interpolate(KernelFamily::Rbf, &values, &points, &array![[0.0], [1.0]], &[1e6]);
        assert!(out.iter().all(|&v| (v - 3.0).abs() < 1e-9));
    }

    #[test]
    fn tape_gradients_match_finite_differences() {
        for kernel in [KernelFamily::Rbf, KernelFamily::Matern32] {
            let values = array![[0.3, -1.0], [1.2, 0.4], [-0.7, 2.0], [0.1, 0.0]];
            let points = array![[0.1, 0.2], [0.5, 0.9], [0.8, 0.3], [0.35, 0.6]];
            let lattice = array![[0.0, 0.0], [0.5, 0.5], [1.0, 0.25]];
            let log_ls = array![[-1.2, -0.3]];
            let weights = array![[0.4, -1.0], [2.0, 0.3], [-0.5, 1.5]];
            let run = |v: &Mat, l: &Mat| {
                let mut t = Tape::new();
                let vv = t.constant(v.clone());
                let lv = t.constant(l.clone());
                let out = nw_tape(&mut t, kernel, vv, &points, &lattice, lv);
                let wv = t.constant(weights.clone());
                let prod = t.mul(out, wv);
                let s = t.sum(prod);
                let adj = t.backward(s);
                (t.scalar(s), adj.get(vv).unwrap().clone(), adj.get(lv).unwrap().clone())
            };
            let (_, dv, dl) = run(&values, &log_ls);
            let h = 1e-6;
            for idx in 0..values.len() {
                let (mut p, mut m) = (values.clone(), values.clone());
                p.as_slice_mut().unwrap()[idx] += h;
                m.as_slice_mut().unwrap()[idx] -= h;
                let fd = (run(&p, &log_ls).0 - run(&m, &log_ls).0) / (2.0 * h);
                assert!((fd - dv.as_slice().unwrap()[idx]).abs() < 1e-8);
            }
            for idx in 0..2 {
                let (mut p, mut m) = (log_ls.clone(), log_ls.clone());
                p[[0, idx]] += h;
                m[[0, idx]] -= h;
                let fd = (run(&values, &p).0 - run(&values, &m).0) / (2.0 * h);
                assert!((fd - dl[[0, idx]]).abs() < 1e-7, "{kernel:?} {fd} {}", dl[[0, idx]]);
            }
        }
    }
}
