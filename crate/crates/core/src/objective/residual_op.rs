//! Tape operation applying the boundary lift and the residual operator at
//! every collocation point.
//!
//! Inputs are the raw field jets (`n x F` value, first and second partials).
//! Each point is evaluated on dual numbers seeded with one slot per input
//! jet component, and the stored partials give the reverse rule.

use ndarray::Array2;

use crate::domain::{lift_apply, BoundaryLift, Jet2, MAX_DIM};
use crate::engine::dual::DUAL_MAX;
use crate::engine::{CustomOp, Dual, JetSpec, Mat, Real, Tape, TapeJet, Var};
use crate::error::{Error, Result};
use crate::pde::Problem;

/// Slot layout of one field: value, first partials, requested second partials.
struct Layout {
    d: usize,
    second: Vec<usize>,
}

impl Layout {
    fn per_field(&self) -> usize {
        1 + self.d + self.second.len()
    }
}

struct ResidualOp {
    /// `n * R * slots` partials.
    partials: Vec<f64>,
    n_res: usize,
    slots: usize,
    n_fields: usize,
    layout: Layout,
}

impl CustomOp for ResidualOp {
    fn backward(&self, inputs: &[&Mat], _output: &Mat, grad: &Mat) -> Vec<Option<Mat>> {
        let n = grad.nrows();
        let per = self.layout.per_field();
        let mut outs: Vec<Mat> = inputs.iter().map(|m| Array2::zeros(m.dim())).collect();
        for i in 0..n {
            for r in 0..self.n_res {
                let g = grad[[i, r]];
                if g == 0.0 {
                    continue;
                }
                let base = (i * self.n_res + r) * self.slots;
                for f in 0..self.n_fields {
                    for c in 0..per {
                        outs[c][[i, f]] += g * self.partials[base + f * per + c];
                    }
                }
            }
        }
        outs.into_iter().map(Some).collect()
    }
}

/// Residuals of the lifted field `B + D u` for the raw jet `u` (`n x F`),
/// returned as an `n x R` tape variable.
pub fn residual_tape(
    tape: &mut Tape,
    problem: &Problem,
    spec: &JetSpec,
    points: &Mat,
    z: &[f64],
    w: &[f64],
    u: &TapeJet,
) -> Result<Var> {
    let n = points.nrows();
    let f_count = problem.n_fields();
    let d = problem.dim();
    if spec.dim() != d || d > MAX_DIM {
        return Err(Error::Shape("jet dimension differs from problem dimension".into()));
    }
    let layout = Layout { d, second: (0..d).filter(|&k| spec.second[k]).collect() };
    let per = layout.per_field();
    let slots = per * f_count;
    if slots > DUAL_MAX {
        return Err(Error::Shape(format!("{slots} tangent slots exceed {DUAL_MAX}")));
    }
    let zero = Array2::zeros((n, f_count));
    let mut inputs = vec![u.value];
    inputs.extend(&u.grad);
    for &k in &layout.second {
        let h = u.hess[k].unwrap_or_else(|| tape.constant(zero.clone()));
        inputs.push(h);
    }
    let mats: Vec<&Mat> = inputs.iter().map(|&v| tape.value(v)).collect();
    if mats.iter().any(|m| m.dim() != (n, f_count)) {
        return Err(Error::Shape("field jets must be n x n_fields".into()));
    }

    let n_res = problem.n_residuals();
    let mut values = Array2::zeros((n, n_res));
    let mut partials = vec![0.0; n * n_res * slots];
    let mut fields = vec![Jet2::<Dual>::constant(0.0); f_count];
    let mut out = vec![Dual::cst(0.0); n_res];
    for i in 0..n {
        let x = points.row(i).to_vec();
        for (f, field) in fields.iter_mut().enumerate() {
            let base = f * per;
            let mut raw = Jet2::<Dual>::constant(0.0);
            raw.v = Dual::var(mats[0][[i, f]], base);
            for k in 0..d {
                raw.g[k] = Dual::var(mats[1 + k][[i, f]], base + 1 + k);
            }
            for (j, &k) in layout.second.iter().enumerate() {
                raw.h[k] = Dual::var(mats[1 + d + j][[i, f]], base + 1 + d + j);
            }
            let (b, dd) = problem.lift(f, &x, w);
            *field = lift_apply(&b, &dd, &raw);
        }
        problem.residual(&x, z, w, &fields, &mut out);
        for (r, o) in out.iter().enumerate() {
            if !o.v.is_finite() {
                return Err(Error::Residual { x });
            }
            values[[i, r]] = o.v;
            let base = (i * n_res + r) * slots;
            partials[base..base + slots].copy_from_slice(&o.d[..slots]);
        }
    }
    let op = ResidualOp { partials, n_res, slots, n_fields: f_count, layout };
    Ok(tape.custom(&inputs, values, Box::new(op)))
}

/// Residuals at every point for plain (lifted) field jets.
pub fn residual_values(
    problem: &Problem,
    points: &Mat,
    z: &[f64],
    w: &[f64],
    lifted: &[Vec<Jet2<f64>>],
) -> Mat {
    let n = points.nrows();
    let n_res = problem.n_residuals();
    let mut out = Array2::zeros((n, n_res));
    let mut buf = vec![0.0; n_res];
    for i in 0..n {
        let x = points.row(i).to_vec();
        problem.residual(&x, z, w, &lifted[i], &mut buf);
        for r in 0..n_res {
            out[[i, r]] = buf[r];
        }
    }
    out
}
