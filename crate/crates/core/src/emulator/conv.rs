//! "Same"-padded convolution over a channels-last lattice tensor.
//!
//! A lattice tensor is stored as `sites x channels`, sites in row-major order
//! of the lattice shape. Convolution acts along a subset of the lattice axes
//! and is expressed as an im2col gather followed by a dense product, so only
//! the gather needs its own reverse rule.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::engine::{CustomOp, Mat, Tape, Var};

/// Geometry of one convolution layer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvGeometry {
    pub in_shape: Vec<usize>,
    /// Lattice axes the kernel slides along.
    pub axes: Vec<usize>,
    /// Odd kernel width.
    pub kernel: usize,
    pub stride: usize,
}

impl ConvGeometry {
    pub fn out_shape(&self) -> Vec<usize> {
        self.in_shape
            .iter()
            .enumerate()
            .map(|(a, &n)| if self.axes.contains(&a) { n.div_ceil(self.stride) } else { n })
            .collect()
    }

    /// Taps per input channel.
    pub fn taps(&self) -> usize {
        self.kernel.pow(self.axes.len() as u32)
    }

    /// For every output site, the input site of every tap (`None` = padding).
    fn gather_table(&self) -> Vec<Vec<Option<usize>>> {
        let out_shape = self.out_shape();
        let n_out: usize = out_shape.iter().product();
        let pad = (self.kernel / 2) as isize;
        let taps = self.taps();
        let mut table = Vec::with_capacity(n_out);
        let mut idx = vec![0usize; out_shape.len()];
        for o in 0..n_out {
            // unravel o
            let mut rem = o;
            for a in (0..out_shape.len()).rev() {
                idx[a] = rem % out_shape[a];
                rem /= out_shape[a];
            }
            let mut row = Vec::with_capacity(taps);
            for tap in 0..taps {
                let mut t = tap;
                let mut offs = vec![0isize; self.in_shape.len()];
                for &a in self.axes.iter().rev() {
                    offs[a] = (t % self.kernel) as isize - pad;
                    t /= self.kernel;
                }
                let mut site = 0usize;
                let mut inside = true;
                for a in 0..self.in_shape.len() {
                    let base = if self.axes.contains(&a) { idx[a] * self.stride } else { idx[a] };
                    let i = base as isize + offs[a];
                    if i < 0 || i >= self.in_shape[a] as isize {
                        inside = false;
                        break;
                    }
                    site = site * self.in_shape[a] + i as usize;
                }
                row.push(inside.then_some(site));
            }
            table.push(row);
        }
        table
    }
}

fn im2col(table: &[Vec<Option<usize>>], x: &Mat) -> Mat {
    let c = x.ncols();
    let taps = table.first().map_or(0, |r| r.len());
    let mut cols = Array2::zeros((table.len(), taps * c));
    for (o, row) in table.iter().enumerate() {
        for (tap, site) in row.iter().enumerate() {
            if let Some(s) = site {
                for ch in 0..c {
                    cols[[o, tap * c + ch]] = x[[*s, ch]];
                }
            }
        }
    }
    cols
}

struct Im2ColOp {
    table: Vec<Vec<Option<usize>>>,
}

impl CustomOp for Im2ColOp {
    fn backward(&self, inputs: &[&Mat], _output: &Mat, grad: &Mat) -> Vec<Option<Mat>> {
        let x = inputs[0];
        let c = x.ncols();
        let mut dx = Array2::zeros(x.dim());
        for (o, row) in self.table.iter().enumerate() {
            for (tap, site) in row.iter().enumerate() {
                if let Some(s) = site {
                    for ch in 0..c {
                        dx[[*s, ch]] += grad[[o, tap * c + ch]];
                    }
                }
            }
        }
        vec![Some(dx)]
    }
}

/// `sites_out x (taps * C_in)` patch matrix of `x` on the tape.
pub fn im2col_tape(tape: &mut Tape, x: Var, geom: &ConvGeometry) -> Var {
    let table = geom.gather_table();
    let cols = im2col(&table, tape.value(x));
    tape.custom(&[x], cols, Box::new(Im2ColOp { table }))
}

/// Plain convolution: `x` is `sites x C_in`, `w` is `C_out x (taps * C_in)`.
pub fn conv_eval(x: &Mat, w: &Mat, geom: &ConvGeometry) -> Mat {
    im2col(&geom.gather_table(), x).dot(&w.t())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn one_dimensional_same_padding() {
        let geom = ConvGeometry { in_shape: vec![5], axes: vec![0], kernel: 3, stride: 1 };
        let x = array![[1.0], [2.0], [3.0], [4.0], [5.0]];
        let w = array![[1.0, 10.0, 100.0]];
        let y = conv_eval(&x, &w, &geom);
        // y[i] = x[i-1] + 10 x[i] + 100 x[i+1]
        assert_eq!(y, array![[210.0], [321.0], [432.0], [543.0], [54.0]]);
    }

    #[test]
    fn stride_halves_output() {
        let geom = ConvGeometry { in_shape: vec![5, 2], axes: vec![0], kernel: 3, stride: 2 };
        assert_eq!(geom.out_shape(), vec![3, 2]);
        let x = Array2::from_shape_fn((10, 1), |(i, _)| i as f64);
        let w = array![[0.0, 1.0, 0.0]];
        let y = conv_eval(&x, &w, &geom);
        // identity tap at rows 0, 2, 4 of the first axis
        assert_eq!(y.column(0).to_vec(), vec![0.0, 1.0, 4.0, 5.0, 8.0, 9.0]);
    }

    #[test]
    fn two_axis_kernel_matches_direct_sum() {
        let geom = ConvGeometry { in_shape: vec![4, 3], axes: vec![0, 1], kernel: 3, stride: 1 };
        let x = Array2::from_shape_fn((12, 2), |(s, c)| ((s * 7 + c * 3) % 5) as f64 - 2.0);
        let w = Array2::from_shape_fn((3, 18), |(o, k)| ((o * 5 + k) % 7) as f64 * 0.1 - 0.3);
        let y = conv_eval(&x, &w, &geom);
        for i in 0..4isize {
            for j in 0..3isize {
                for o in 0..3 {
                    let mut acc = 0.0;
                    for di in -1..=1isize {
                        for dj in -1..=1isize {
                            let (a, b) = (i + di, j + dj);
                            if !(0..4).contains(&a) || !(0..3).contains(&b) {
                                continue;
                            }
                            let tap = ((di + 1) * 3 + (dj + 1)) as usize;
                            for c in 0..2 {
                                acc += w[[o, tap * 2 + c]] * x[[(a * 3 + b) as usize, c]];
                            }
                        }
                    }
                    assert!((y[[(i * 3 + j) as usize, o]] - acc).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn im2col_gradient_is_adjoint() {
        let geom = ConvGeometry { in_shape: vec![3, 4], axes: vec![1], kernel: 3, stride: 2 };
        let x = Array2::from_shape_fn((12, 2), |(s, c)| (s as f64 * 0.3 + c as f64).sin());
        let mut t = Tape::new();
        let xv = t.constant(x.clone());
        let cols = im2col_tape(&mut t, xv, &geom);
        let probe = Array2::from_shape_fn(t.shape(cols), |(i, j)| ((i * 3 + j) % 4) as f64 - 1.5);
        let pv = t.constant(probe.clone());
        let prod = t.mul(cols, pv);
        let s = t.sum(prod);
        let dx = t.backward(s).get(xv).unwrap().clone();
        // <probe, A x> is linear in x, so the gradient is exact against a perturbation
        let base = t.scalar(s);
        for idx in 0..x.len() {
            let mut xp = x.clone();
            xp.as_slice_mut().unwrap()[idx] += 1.0;
            let cols = im2col(&geom.gather_table(), &xp);
            let val: f64 = (&cols * &probe).sum();
            assert!((val - base - dx.as_slice().unwrap()[idx]).abs() < 1e-12);
        }
    }
}
