//! Box domains, random collocation grids and exact Dirichlet lifts
//! `u_bar = B + D u`.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::Real;
use crate::error::{Error, Result};

/// Largest spatio-temporal dimension handled by the point jets.
pub const MAX_DIM: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(bounds: &[(f64, f64)]) -> Result<Self> {
        if bounds.is_empty() || bounds.len() > MAX_DIM {
            return Err(Error::Shape(format!("dimension {} unsupported", bounds.len())));
        }
        if bounds.iter().any(|&(lo, hi)| !(lo < hi)) {
            return Err(Error::Domain(format!("empty interval in {bounds:?}")));
        }
        Ok(Self {
            lo: bounds.iter().map(|b| b.0).collect(),
            hi: bounds.iter().map(|b| b.1).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains_open(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(&v, (&lo, &hi))| v > lo && v < hi)
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (a + b)).collect()
    }
}

/// Sampling law `p(X)` of collocation points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GridMeasure {
    /// i.i.d. uniform over the open box.
    #[default]
    Uniform,
    /// Mixture of uniform and an arcsine law that concentrates near the faces.
    EdgeBiased { weight: f64 },
}

/// A sampled set of collocation coordinates, one point per row.
#[derive(Clone, Debug, PartialEq)]
pub struct RandomGrid {
    pub points: Array2<f64>,
}

impl RandomGrid {
    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        self.points.row(i).to_vec()
    }
}

fn open_uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    loop {
        let v = rng.random_range(lo..hi);
        if v > lo {
            return v;
        }
    }
}

/// Draws `n` points from `measure` over the interior of `domain`.
pub fn sample_grid<R: Rng + ?Sized>(
    domain: &BoxDomain,
    n: usize,
    measure: GridMeasure,
    rng: &mut R,
) -> Result<RandomGrid> {
    if n == 0 {
        return Err(Error::Shape("grid needs at least one point".into()));
    }
    let d = domain.dim();
    let mut points = Array2::zeros((n, d));
    for i in 0..n {
        let edge = match measure {
            GridMeasure::Uniform => false,
            GridMeasure::EdgeBiased { weight } => rng.random_bool(weight.clamp(0.0, 1.0)),
        };
        for k in 0..d {
            let (lo, hi) = (domain.lo[k], domain.hi[k]);
            points[[i, k]] = if edge {
                loop {
                    let u = rng.random_range(0.0..1.0);
                    let v = lo + (hi - lo) * 0.5 * (1.0 - (std::f64::consts::PI * u).cos());
                    if v > lo && v < hi {
                        break v;
                    }
                }
            } else {
                open_uniform(rng, lo, hi)
            };
        }
    }
    Ok(RandomGrid { points })
}

/// Value, first, pure second and mixed second partials at one point.
///
/// Mixed entries follow the pair order `(0,1), (0,2), (1,2)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet2<T> {
    pub v: T,
    pub g: [T; MAX_DIM],
    pub h: [T; MAX_DIM],
    pub m: [T; MAX_DIM],
}

impl<T: Real> Jet2<T> {
    pub fn constant(v: f64) -> Self {
        let z = T::cst(0.0);
        Self { v: T::cst(v), g: [z; MAX_DIM], h: [z; MAX_DIM], m: [z; MAX_DIM] }
    }
}

impl Jet2<f64> {
    pub fn scalar(v: f64, g: [f64; MAX_DIM], h: [f64; MAX_DIM]) -> Self {
        Self { v, g, h, m: [0.0; MAX_DIM] }
    }
}

const PAIRS: [(usize, usize); MAX_DIM] = [(0, 1), (0, 2), (1, 2)];

/// Product rule for `B + D u` up to second order.
pub fn lift_apply<T: Real>(b: &Jet2<f64>, d: &Jet2<f64>, u: &Jet2<T>) -> Jet2<T> {
    let mut out = Jet2::<T>::constant(0.0);
    out.v = u.v * d.v + b.v;
    for k in 0..MAX_DIM {
        out.g[k] = u.v * d.g[k] + u.g[k] * d.v + b.g[k];
        out.h[k] = u.v * d.h[k] + u.g[k] * (2.0 * d.g[k]) + u.h[k] * d.v + b.h[k];
    }
    for (p, &(k, l)) in PAIRS.iter().enumerate() {
        out.m[p] = u.v * d.m[p] + u.g[k] * d.g[l] + u.g[l] * d.g[k] + u.m[p] * d.v + b.m[p];
    }
    out
}

/// One Dirichlet or initial condition: on the face `x[axis] = at`, field
/// `field` takes `value(x, w)`.
#[derive(Clone, Copy, Debug)]
pub struct BoundaryCondition {
    pub name: &'static str,
    pub field: usize,
    pub axis: usize,
    pub at: f64,
    pub value: fn(&[f64], &[f64]) -> f64,
}

/// Lift pair `(B, D)` for every field of a problem.
pub trait BoundaryLift {
    fn n_fields(&self) -> usize;
    /// Jets of `B` and `D` for `field` at `x`.
    fn lift(&self, field: usize, x: &[f64], w: &[f64]) -> (Jet2<f64>, Jet2<f64>);
    /// Conditions the lift must reproduce exactly.
    fn conditions(&self) -> Vec<BoundaryCondition>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct LiftReport {
    /// `(condition, max |D|, max |B - prescribed|)`.
    pub rows: Vec<(&'static str, f64, f64)>,
}

impl LiftReport {
    pub fn worst(&self) -> f64 {
        self.rows.iter().map(|r| r.1.max(r.2)).fold(0.0, f64::max)
    }
}

/// Samples `n_points` on every declared face and checks that `D` vanishes and
/// `B` matches the prescribed values to `1e-12`.
pub fn boundary_check<L: BoundaryLift + ?Sized, R: Rng + ?Sized>(
    lift: &L,
    domain: &BoxDomain,
    w_prior: &[(f64, f64)],
    n_points: usize,
    rng: &mut R,
) -> Result<LiftReport> {
    const TOL: f64 = 1e-12;
    let mut rows = Vec::new();
    for cond in lift.conditions() {
        let (mut max_d, mut max_b) = (0.0f64, 0.0f64);
        for _ in 0..n_points {
            let mut x: Vec<f64> = (0..domain.dim())
                .map(|k| rng.random_range(domain.lo[k]..=domain.hi[k]))
                .collect();
            x[cond.axis] = cond.at;
            let w: Vec<f64> = w_prior.iter().map(|&(a, b)| rng.random_range(a..=b)).collect();
            let (b, d) = lift.lift(cond.field, &x, &w);
            max_d = max_d.max(d.v.abs());
            max_b = max_b.max((b.v - (cond.value)(&x, &w)).abs());
        }
        if max_d > TOL || max_b > TOL {
            return Err(Error::LiftMismatch {
                condition: cond.name.to_string(),
                violation: max_d.max(max_b),
            });
        }
        rows.push((cond.name, max_d, max_b));
    }
    Ok(LiftReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn grid_points_are_interior_and_reproducible() {
        let dom = BoxDomain::new(&[(-1.0, 1.0)]).unwrap();
        let g1 = sample_grid(&dom, 30, GridMeasure::Uniform, &mut ChaCha8Rng::seed_from_u64(5))
            .unwrap();
        let g2 = sample_grid(&dom, 30, GridMeasure::Uniform, &mut ChaCha8Rng::seed_from_u64(5))
            .unwrap();
        assert_eq!(g1, g2);
        assert_eq!(g1.len(), 30);
        assert!(g1.points.rows().into_iter().all(|r| dom.contains_open(r.as_slice().unwrap())));
        let edge = GridMeasure::EdgeBiased { weight: 1.0 };
        let g3 = sample_grid(&dom, 500, edge, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(g3.points.iter().all(|&v| v > -1.0 && v < 1.0));
    }

    #[test]
    fn grid_coordinate_means_approach_midpoint() {
        let dom = BoxDomain::new(&[(0.0, 1.0), (0.0, 1.0), (0.0, 1.0)]).unwrap();
        let g = sample_grid(&dom, 100_000, GridMeasure::Uniform, &mut ChaCha8Rng::seed_from_u64(9))
            .unwrap();
        for k in 0..3 {
            let mean = g.points.column(k).mean().unwrap();
            assert!((mean - 0.5).abs() < 0.01);
        }
    }

    #[test]
    fn empty_grid_rejected() {
        let dom = BoxDomain::new(&[(0.0, 1.0)]).unwrap();
        assert!(sample_grid(&dom, 0, GridMeasure::Uniform, &mut ChaCha8Rng::seed_from_u64(0))
            .is_err());
        assert!(BoxDomain::new(&[(1.0, 1.0)]).is_err());
    }

    struct Unit;

    impl BoundaryLift for Unit {
        fn n_fields(&self) -> usize {
            1
        }
        fn lift(&self, _: usize, _: &[f64], _: &[f64]) -> (Jet2<f64>, Jet2<f64>) {
            (Jet2::constant(0.0), Jet2::constant(1.0))
        }
        fn conditions(&self) -> Vec<BoundaryCondition> {
            vec![BoundaryCondition { name: "u(1) = 0", field: 0, axis: 0, at: 1.0, value: |_, _| 0.0 }]
        }
    }

    #[test]
    fn wrong_lift_is_reported() {
        let dom = BoxDomain::new(&[(-1.0, 1.0)]).unwrap();
        let err = boundary_check(&Unit, &dom, &[], 10, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(err, Err(Error::LiftMismatch { .. })));
    }

    #[test]
    fn lift_product_rule_matches_finite_differences() {
        // B = x^2 y, D = sin(x) cos(y), u = exp(x y)
        let jets = |x: f64, y: f64| {
            let b = Jet2 {
                v: x * x * y,
                g: [2.0 * x * y, x * x, 0.0],
                h: [2.0 * y, 0.0, 0.0],
                m: [2.0 * x, 0.0, 0.0],
            };
            let (s, c) = (x.sin(), y.cos());
            let d = Jet2 {
                v: s * c,
                g: [x.cos() * c, -s * y.sin(), 0.0],
                h: [-s * c, -s * c, 0.0],
                m: [-x.cos() * y.sin(), 0.0, 0.0],
            };
            let e = (x * y).exp();
            let u = Jet2 {
                v: e,
                g: [y * e, x * e, 0.0],
                h: [y * y * e, x * x * e, 0.0],
                m: [(1.0 + x * y) * e, 0.0, 0.0],
            };
            lift_apply(&b, &d, &u)
        };
        let (x, y) = (0.4, -0.7);
        let j = jets(x, y);
        let f = |x: f64, y: f64| jets(x, y).v;
        let h = 1e-5;
        let fx = (f(x + h, y) - f(x - h, y)) / (2.0 * h);
        let fy = (f(x, y + h) - f(x, y - h)) / (2.0 * h);
        assert!((j.g[0] - fx).abs() <= 1e-6 * fx.abs().max(1e-3));
        assert!((j.g[1] - fy).abs() <= 1e-6 * fy.abs().max(1e-3));
        let h = 1e-3;
        let fxx = (f(x + h, y) - 2.0 * f(x, y) + f(x - h, y)) / (h * h);
        let fxy = (f(x + h, y + h) - f(x + h, y - h) - f(x - h, y + h) + f(x - h, y - h))
            / (4.0 * h * h);
        assert!((j.h[0] - fxx).abs() <= 1e-4 * fxx.abs().max(1e-3));
        assert!((j.m[0] - fxy).abs() <= 1e-4 * fxy.abs().max(1e-3));
    }
}
