//! Viscous Burgers equation `u_t + z1 u u_x - z0 u_xx = 0` on
//! `[-1, 1] x [0, 1]` with initial state `sin(2 pi w x) sin(pi x)`.

use std::f64::consts::PI;

use crate::domain::{BoundaryCondition, BoundaryLift, Jet2};
use crate::engine::Real;

/// Coordinates are ordered `(x, t)`.
pub fn burgers_residual<T: Real>(z: &[f64], u: &Jet2<T>) -> T {
    u.g[1] + u.v * u.g[0] * z[1] - u.h[0] * z[0]
}

pub fn burgers_ic(w: f64, x: f64) -> f64 {
    (2.0 * PI * w * x).sin() * (PI * x).sin()
}

/// `B = sin(2 pi w x) sin(pi x)`, `D = sin(pi x) t`.
#[derive(Clone, Copy, Debug, Default)]
pub struct BurgersLift;

impl BoundaryLift for BurgersLift {
    fn n_fields(&self) -> usize {
        1
    }

    fn lift(&self, _field: usize, x: &[f64], w: &[f64]) -> (Jet2<f64>, Jet2<f64>) {
        let (xx, t) = (x[0], x[1]);
        let k = 2.0 * PI * w[0];
        let (s1, c1) = (k * xx).sin_cos();
        let (s2, c2) = (PI * xx).sin_cos();
        let b = Jet2::scalar(
            s1 * s2,
            [k * c1 * s2 + PI * s1 * c2, 0.0, 0.0],
            [-(k * k + PI * PI) * s1 * s2 + 2.0 * k * PI * c1 * c2, 0.0, 0.0],
        );
        let mut d = Jet2::scalar(s2 * t, [PI * c2 * t, s2, 0.0], [-PI * PI * s2 * t, 0.0, 0.0]);
        d.m[0] = PI * c2;
        (b, d)
    }

    fn conditions(&self) -> Vec<BoundaryCondition> {
        vec![
            BoundaryCondition { name: "u(-1, t) = 0", field: 0, axis: 0, at: -1.0, value: |_, _| 0.0 },
            BoundaryCondition { name: "u(1, t) = 0", field: 0, axis: 0, at: 1.0, value: |_, _| 0.0 },
            BoundaryCondition {
                name: "u(x, 0) = sin(2 pi w x) sin(pi x)",
                field: 0,
                axis: 1,
                at: 0.0,
                value: |x, w| burgers_ic(w[0], x[0]),
            },
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_fields_have_zero_residual() {
        let z = [0.05, 0.7];
        assert_eq!(burgers_residual(&z, &Jet2::<f64>::constant(0.0)), 0.0);
        assert_eq!(burgers_residual(&z, &Jet2::<f64>::constant(2.5)), 0.0);
    }

    #[test]
    fn initial_condition_values() {
        assert_eq!(burgers_ic(1.3, 0.0), 0.0);
        assert!(burgers_ic(0.7, 1.0).abs() < 1e-15);
        assert!(burgers_ic(0.7, -1.0).abs() < 1e-15);
        assert!((burgers_ic(1.0, 0.25) - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn lift_at_initial_time_is_ic() {
        let raw = Jet2::scalar(3.7, [1.0, -2.0, 0.0], [0.5, 0.0, 0.0]);
        let (b, d) = BurgersLift.lift(0, &[0.3, 0.0], &[1.4]);
        let u = crate::domain::lift_apply(&b, &d, &raw);
        assert!((u.v - burgers_ic(1.4, 0.3)).abs() < 1e-15);
    }

    #[test]
    fn lift_jets_match_finite_differences() {
        let w = [1.2];
        let x = [0.37, 0.6];
        let (b, d) = BurgersLift.lift(0, &x, &w);
        let h = 1e-5;
        for k in 0..2 {
            let mut p = x;
            let mut m = x;
            p[k] += h;
            m[k] -= h;
            let (bp, dp) = BurgersLift.lift(0, &p, &w);
            let (bm, dm) = BurgersLift.lift(0, &m, &w);
            assert!((b.g[k] - (bp.v - bm.v) / (2.0 * h)).abs() < 1e-8);
            assert!((d.g[k] - (dp.v - dm.v) / (2.0 * h)).abs() < 1e-8);
            assert!((b.h[k] - (bp.g[k] - bm.g[k]) / (2.0 * h)).abs() < 1e-7);
            assert!((d.h[k] - (dp.g[k] - dm.g[k]) / (2.0 * h)).abs() < 1e-7);
        }
        let mut p = x;
        let mut m = x;
        p[1] += h;
        m[1] -= h;
        let (_, dp) = BurgersLift.lift(0, &p, &w);
        let (_, dm) = BurgersLift.lift(0, &m, &w);
        assert!((d.m[0] - (dp.g[0] - dm.g[0]) / (2.0 * h)).abs() < 1e-7);
    }
}
