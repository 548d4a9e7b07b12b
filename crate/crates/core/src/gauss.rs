//! Gaussians with diagonal and diagonal-plus-low-rank covariance.
//!
//! `K = diag(lambda) + V V^T` with `V` of shape `n x l`. Solves go through the
//! Woodbury identity and log-determinants through the matrix determinant
//! lemma, both using the Cholesky factor of the `l x l` capacitance matrix
//! `M = I + V^T diag(lambda)^-1 V`.


use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::engine::{CustomOp, Mat, Tape, Var};
use crate::error::{Error, Result};

pub use crate::engine::scalar::{sigma_t, ExpLinearBounds};

pub const LOG_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Clone, Debug, PartialEq)]
pub struct DiagGaussian {
    pub mean: Array1<f64>,
    pub var: Array1<f64>,
}

impl DiagGaussian {
    pub fn new(mean: Array1<f64>, var: Array1<f64>) -> Result<Self> {
        if mean.len() != var.len() {
            return Err(Error::Shape(format!("mean {} vs var {}", mean.len(), var.len())));
        }
        if var.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::SingularCovariance("nonpositive variance".into()));
        }
        Ok(Self { mean, var })
    }

    pub fn logpdf(&self, x: ArrayView1<f64>) -> Result<f64> {
        if x.len() != self.mean.len() {
            return Err(Error::Shape(format!("point {} vs dim {}", x.len(), self.mean.len())));
        }
        let mut quad = 0.0;
        let mut logdet = 0.0;
        for ((&xi, &m), &v) in x.iter().zip(&self.mean).zip(&self.var) {
            let a = xi - m;
            quad += a * (a / v);
            logdet += v.ln();
        }
        Ok(-0.5 * (x.len() as f64) * LOG_2PI - 0.5 * logdet - 0.5 * quad)
    }

    pub fn std(&self) -> Array1<f64> {
        self.var.mapv(f64::sqrt)
    }
}

/// Multivariate normal `N(mean, diag(lambda) + V V^T)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LowRankGaussian {
    pub mean: Array1<f64>,
    pub lambda: Array1<f64>,
    pub v: Array2<f64>,
}

/// Cholesky factor of the capacitance matrix plus cached scaled factor.
struct Capacitance {
    /// Lower-triangular `l x l`.
    chol: Array2<f64>,
    /// `diag(lambda)^-1 V`.
    scaled_v: Array2<f64>,
}

/// In-place lower Cholesky of a small symmetric matrix.
fn cholesky(mut a: Array2<f64>) -> Option<Array2<f64>> {
    let l = a.nrows();
    for j in 0..l {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= a[[j, k]] * a[[j, k]];
        }
        if !(d > 0.0 && d.is_finite()) {
            return None;
        }
        let d = d.sqrt();
        a[[j, j]] = d;
        for i in j + 1..l {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= a[[i, k]] * a[[j, k]];
            }
            a[[i, j]] = s / d;
        }
        for i in 0..j {
            a[[i, j]] = 0.0;
        }
    }
    Some(a)
}

/// Solves `L L^T x = b` for every column of `b`.
fn chol_solve(chol: &Array2<f64>, b: &mut Array2<f64>) {
    let l = chol.nrows();
    for c in 0..b.ncols() {
        for i in 0..l {
            let mut s = b[[i, c]];
            for k in 0..i {
                s -= chol[[i, k]] * b[[k, c]];
            }
            b[[i, c]] = s / chol[[i, i]];
        }
        for i in (0..l).rev() {
            let mut s = b[[i, c]];
            for k in i + 1..l {
                s -= chol[[k, i]] * b[[k, c]];
            }
            b[[i, c]] = s / chol[[i, i]];
        }
    }
}

impl Capacitance {
    fn new(lambda: ArrayView1<f64>, v: ArrayView2<f64>) -> Result<Self> {
        let mut scaled_v = v.to_owned();
        for (mut row, &lam) in scaled_v.rows_mut().into_iter().zip(lambda) {
            row.mapv_inplace(|x| x / lam);
        }
        let mut m = v.t().dot(&scaled_v);
        for i in 0..m.nrows() {
            m[[i, i]] += 1.0;
        }
        let chol = cholesky(m).ok_or_else(|| {
            Error::SingularCovariance("capacitance matrix is not positive definite".into())
        })?;
        Ok(Self { chol, scaled_v })
    }

    fn logdet(&self) -> f64 {
        2.0 * self.chol.diag().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// `K^-1 a` for a column vector `a`.
    fn solve(&self, lambda: ArrayView1<f64>, v: ArrayView2<f64>, a: ArrayView1<f64>) -> Array1<f64> {
        let base = &a / &lambda;
        if v.ncols() == 0 {
            return base;
        }
        let mut inner = v.t().dot(&base).insert_axis(Axis(1));
        chol_solve(&self.chol, &mut inner);
        base - self.scaled_v.dot(&inner.column(0))
    }
}

fn check_positive(lambda: ArrayView1<f64>) -> Result<()> {
    if lambda.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::SingularCovariance("diagonal must be positive and finite".into()));
    }
    Ok(())
}

impl LowRankGaussian {
    pub fn new(mean: Array1<f64>, lambda: Array1<f64>, v: Array2<f64>) -> Result<Self> {
        let n = mean.len();
        if lambda.len() != n || v.nrows() != n {
            return Err(Error::Shape(format!(
                "mean {n}, lambda {}, V {}x{}",
                lambda.len(),
                v.nrows(),
                v.ncols()
            )));
        }
        if v.ncols() > n {
            return Err(Error::Shape(format!("rank {} exceeds dimension {n}", v.ncols())));
        }
        check_positive(lambda.view())?;
        Ok(Self { mean, lambda, v })
    }

    /// Diagonal covariance (rank zero).
    pub fn diag(mean: Array1<f64>, lambda: Array1<f64>) -> Result<Self> {
        let n = mean.len();
        Self::new(mean, lambda, Array2::zeros((n, 0)))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn rank(&self) -> usize {
        self.v.ncols()
    }

    fn capacitance(&self) -> Result<Capacitance> {
        Capacitance::new(self.lambda.view(), self.v.view())
    }

    /// `mean + sqrt(lambda) * eps_lambda + V eps_v`.
    pub fn sample(&self, eps_lambda: ArrayView1<f64>, eps_v: ArrayView1<f64>) -> Result<Array1<f64>> {
        if eps_lambda.len() != self.dim() || eps_v.len() != self.rank() {
            return Err(Error::Shape("noise length".into()));
        }
        let mut out = &self.mean + &(self.lambda.mapv(f64::sqrt) * eps_lambda);
        if self.rank() > 0 {
            out += &self.v.dot(&eps_v);
        }
        Ok(out)
    }

    /// `K^-1 a`.
    pub fn solve(&self, a: ArrayView1<f64>) -> Result<Array1<f64>> {
        if a.len() != self.dim() {
            return Err(Error::Shape(format!("rhs {} vs dim {}", a.len(), self.dim())));
        }
        let cap = self.capacitance()?;
        Ok(cap.solve(self.lambda.view(), self.v.view(), a))
    }

    pub fn logdet(&self) -> Result<f64> {
        let cap = self.capacitance()?;
        Ok(self.lambda.iter().map(|l| l.ln()).sum::<f64>() + cap.logdet())
    }

    pub fn logpdf(&self, x: ArrayView1<f64>) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::Shape(format!("point {} vs dim {}", x.len(), self.dim())));
        }
        let cap = self.capacitance()?;
        let a = &x - &self.mean;
        let alpha = cap.solve(self.lambda.view(), self.v.view(), a.view());
        let logdet = self.lambda.iter().map(|l| l.ln()).sum::<f64>() + cap.logdet();
        Ok(-0.5 * (self.dim() as f64) * LOG_2PI - 0.5 * logdet - 0.5 * a.dot(&alpha))
    }

    /// Pointwise marginal standard deviations `sqrt(lambda_i + |V_i|^2)`.
    pub fn marginal_std(&self) -> Array1<f64> {
        let rows = self.v.map_axis(Axis(1), |r| r.dot(&r));
        (&self.lambda + &rows).mapv(f64::sqrt)
    }

    /// Dense `n x n` covariance. Quadratic memory; meant for small checks.
    pub fn covariance_dense(&self) -> Array2<f64> {
        let mut k = self.v.dot(&self.v.t());
        for (i, &l) in self.lambda.iter().enumerate() {
            k[[i, i]] += l;
        }
        k
    }
}

/// Concatenates per-field Gaussians. The factors are stacked row-wise so that
/// the cross-covariance between fields `a` and `b` is `V_a V_b^T`.
pub fn stack_fields(fields: &[LowRankGaussian]) -> Result<LowRankGaussian> {
    let Some(first) = fields.first() else {
        return Err(Error::Shape("no fields to stack".into()));
    };
    let l = first.rank();
    if fields.iter().any(|f| f.rank() != l) {
        return Err(Error::Shape("fields have different ranks".into()));
    }
    let n: usize = fields.iter().map(|f| f.dim()).sum();
    let mut mean = Array1::zeros(n);
    let mut lambda = Array1::zeros(n);
    let mut v = Array2::zeros((n, l));
    let mut at = 0;
    for f in fields {
        let k = f.dim();
        mean.slice_mut(s![at..at + k]).assign(&f.mean);
        lambda.slice_mut(s![at..at + k]).assign(&f.lambda);
        v.slice_mut(s![at..at + k, ..]).assign(&f.v);
        at += k;
    }
    LowRankGaussian::new(mean, lambda, v)
}

/// Log-density recorded on the tape with an analytic reverse rule.
///
/// `x`, `mean`, `lambda` are `n x 1` columns and `v` is `n x l`. The result
/// is a `1 x 1` scalar. Cost is `O(n l^2)` in both directions.
pub fn lr_logpdf_tape(tape: &mut Tape, x: Var, mean: Var, lambda: Var, v: Var) -> Result<Var> {
    let xv = tape.value(x).column(0).to_owned();
    let mv = tape.value(mean).column(0).to_owned();
    let lam = tape.value(lambda).column(0).to_owned();
    let vv = tape.value(v).clone();
    let n = xv.len();
    if mv.len() != n || lam.len() != n || vv.nrows() != n {
        return Err(Error::Shape("log-density operands".into()));
    }
    check_positive(lam.view())?;
    let cap = Capacitance::new(lam.view(), vv.view())?;
    let a = &xv - &mv;
    let alpha = cap.solve(lam.view(), vv.view(), a.view());
    let logdet = lam.iter().map(|l| l.ln()).sum::<f64>() + cap.logdet();
    let value = -0.5 * (n as f64) * LOG_2PI - 0.5 * logdet - 0.5 * a.dot(&alpha);

    // K^-1 V = diag(lambda)^-1 V M^-1
    let l = vv.ncols();
    let mut minv = Array2::eye(l);
    chol_solve(&cap.chol, &mut minv);
    let kinv_v = cap.scaled_v.dot(&minv);
    // diag(K^-1)_i = 1/lambda_i - (Lambda^-1 V)_i M^-1 (Lambda^-1 V)_i^T
    let kinv_diag = Array1::from_shape_fn(n, |i| {
        1.0 / lam[i] - cap.scaled_v.row(i).dot(&kinv_v.row(i))
    });
    let op = LowRankLogPdf { alpha, kinv_v, kinv_diag, v: vv };
    Ok(tape.custom(&[x, mean, lambda, v], Array2::from_elem((1, 1), value), Box::new(op)))
}

/// Reverse rule of the low-rank log-density.
struct LowRankLogPdf {
    alpha: Array1<f64>,
    kinv_v: Array2<f64>,
    kinv_diag: Array1<f64>,
    v: Array2<f64>,
}

impl CustomOp for LowRankLogPdf {
    fn backward(&self, _inputs: &[&Mat], _output: &Mat, grad: &Mat) -> Vec<Option<Mat>> {
        let g = grad[[0, 0]];
        let n = self.alpha.len();
        let col = |a: Array1<f64>| a.into_shape_with_order((n, 1)).expect("column");
        let dx = col(self.alpha.mapv(|a| -g * a));
        let dmean = col(self.alpha.mapv(|a| g * a));
        let dlambda = col(
            ndarray::Zip::from(&self.kinv_diag)
                .and(&self.alpha)
                .map_collect(|&k, &a| g * 0.5 * (a * a - k)),
        );
        // d/dV = -K^-1 V + alpha (alpha^T V)
        let at_v = self.v.t().dot(&self.alpha);
        let outer = self
            .alpha
            .view()
            .insert_axis(Axis(1))
            .dot(&at_v.view().insert_axis(Axis(0)));
        let dv = (outer - &self.kinv_v) * g;
        vec![Some(dx), Some(dmean), Some(dlambda), Some(dv)]
    }
}
