//! Piecewise cubic Lagrange interpolation on uniform tensor grids.

use crate::error::{Error, Result};

/// Uniform 1D node set `lo + i h`, `i = 0..n`.
#[derive(Clone, Debug, PartialEq)]
pub struct UniformAxis {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl UniformAxis {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n < 4 || !(hi > lo) {
            return Err(Error::Domain("axis needs at least four nodes and hi > lo".into()));
        }
        Ok(Self { lo, hi, n })
    }

    pub fn h(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.hi
        } else {
            self.lo + i as f64 * self.h()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    /// First node of the four-point stencil around `x` and the weights of the
    /// interpolant and its first two derivatives.
    pub fn stencil(&self, x: f64) -> (usize, [[f64; 4]; 3]) {
        let h = self.h();
        let cell = ((x - self.lo) / h).floor() as isize;
        let i0 = (cell - 1).clamp(0, self.n as isize - 4) as usize;
        let s = (x - self.lo) / h - i0 as f64;
        let mut w = [[0.0; 4]; 3];
        for j in 0..4 {
            let others: Vec<f64> = (0..4).filter(|&m| m != j).map(|m| m as f64).collect();
            let (a, b, c) = (s - others[0], s - others[1], s - others[2]);
            let den: f64 = others.iter().map(|&m| j as f64 - m).product();
            w[0][j] = a * b * c / den;
            w[1][j] = (b * c + a * c + a * b) / den / h;
            w[2][j] = 2.0 * (a + b + c) / den / (h * h);
        }
        (i0, w)
    }
}

/// Value, first and second derivatives along each axis of an interpolant.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct InterpJet {
    pub v: f64,
    pub g: [f64; 2],
    pub h: [f64; 2],
}

/// Interpolant of nodal values on a 1D or 2D tensor grid. For two axes the
/// values are stored with the last axis fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Interpolant {
    pub axes: Vec<UniformAxis>,
    pub values: Vec<f64>,
}

impl Interpolant {
    pub fn new(axes: Vec<UniformAxis>, values: Vec<f64>) -> Result<Self> {
        let n: usize = axes.iter().map(|a| a.n).product();
        if axes.is_empty() || axes.len() > 2 || values.len() != n {
            return Err(Error::Shape("interpolant needs one or two axes and matching values".into()));
        }
        Ok(Self { axes, values })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.eval_jet(x).v
    }

    pub fn eval_jet(&self, x: &[f64]) -> InterpJet {
        match self.axes.len() {
            1 => {
                let (i0, w) = self.axes[0].stencil(x[0]);
                let mut out = InterpJet::default();
                for j in 0..4 {
                    let u = self.values[i0 + j];
                    out.v += w[0][j] * u;
                    out.g[0] += w[1][j] * u;
                    out.h[0] += w[2][j] * u;
                }
                out
            }
            _ => {
                let (i0, wa) = self.axes[0].stencil(x[0]);
                let (k0, wb) = self.axes[1].stencil(x[1]);
                let nb = self.axes[1].n;
                let mut out = InterpJet::default();
                for j in 0..4 {
                    for k in 0..4 {
                        let u = self.values[(i0 + j) * nb + k0 + k];
                        out.v += wa[0][j] * wb[0][k] * u;
                        out.g[0] += wa[1][j] * wb[0][k] * u;
                        out.g[1] += wa[0][j] * wb[1][k] * u;
                        out.h[0] += wa[2][j] * wb[0][k] * u;
                        out.h[1] += wa[0][j] * wb[2][k] * u;
                    }
                }
                out
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_cubics_exactly() {
        let ax = UniformAxis::new(-1.0, 1.0, 17).unwrap();
        let f = |x: f64| 2.0 * x * x * x - x * x + 0.5 * x - 3.0;
        let vals = ax.nodes().iter().map(|&x| f(x)).collect();
        let it = Interpolant::new(vec![ax], vals).unwrap();
        for &x in &[-1.0, -0.93, -0.2, 0.0, 0.41, 0.999, 1.0] {
            let j = it.eval_jet(&[x]);
            assert!((j.v - f(x)).abs() < 1e-12);
            assert!((j.g[0] - (6.0 * x * x - 2.0 * x + 0.5)).abs() < 1e-10);
            assert!((j.h[0] - (12.0 * x - 2.0)).abs() < 1e-8);
        }
    }

    #[test]
    fn tensor_product_matches_separable_function() {
        let a = UniformAxis::new(0.0, 1.0, 9).unwrap();
        let b = UniformAxis::new(-1.0, 1.0, 11).unwrap();
        let f = |x: f64, t: f64| (x * x - x) * (t * t * t + t);
        let mut vals = Vec::new();
        for &x in &a.nodes() {
            for &t in &b.nodes() {
                vals.push(f(x, t));
            }
        }
        let it = Interpolant::new(vec![a, b], vals).unwrap();
        let j = it.eval_jet(&[0.37, 0.52]);
        assert!((j.v - f(0.37, 0.52)).abs() < 1e-12);
        assert!((j.g[1] - (0.37f64 * 0.37 - 0.37) * (3.0 * 0.52 * 0.52 + 1.0)).abs() < 1e-10);
    }

    #[test]
    fn fourth_order_accuracy_on_smooth_function() {
        let err = |n: usize| {
            let ax = UniformAxis::new(0.0, 1.0, n).unwrap();
            let vals = ax.nodes().iter().map(|&x| (3.0 * x).sin()).collect();
            let it = Interpolant::new(vec![ax], vals).unwrap();
            (0..200)
                .map(|i| {
                    let x = (i as f64 + 0.5) / 200.0;
                    (it.eval(&[x]) - (3.0 * x).sin()).abs()
                })
                .fold(0.0, f64::max)
        };
        let order = (err(17) / err(33)).log2();
        assert!(order > 3.5, "order {order}");
    }
}
