//! Incompressible lid-driven cavity on `[0, 1]^2 x [0, 1]`.
//!
//! Fields are `(u1, u2, p)`, coordinates `(x, y, t)`, parameters
//! `z = (density, viscosity)`.

use std::f64::consts::PI;

use crate::domain::{BoundaryCondition, BoundaryLift, Jet2};
use crate::engine::Real;

pub const DIVERGENCE_SCALE: f64 = 10.0;

/// Lid velocity profile `(1 - (2x - 1)^6) t`.
pub fn lid_profile(x: f64, t: f64) -> f64 {
    (1.0 - (2.0 * x - 1.0).powi(6)) * t
}

/// Two momentum residuals followed by the scaled divergence.
pub fn ns_residual<T: Real>(z: &[f64], div_scale: f64, f: &[Jet2<T>], out: &mut [T]) {
    let (rho, nu) = (z[0], z[1]);
    let (u1, u2, p) = (&f[0], &f[1], &f[2]);
    for (c, u) in [u1, u2].into_iter().enumerate() {
        let adv = u1.v * u.g[0] + u2.v * u.g[1];
        let lap = u.h[0] + u.h[1];
        out[c] = (u.g[2] + adv) * rho + p.g[c] - lap * nu;
    }
    out[2] = (u1.g[0] + u2.g[1]) * div_scale;
}

/// Velocity lift with `D = sin(pi x) sin(pi y) t` and `B_u1 = lid(x, t) y^4`.
/// Pressure is left unconstrained (`B = 0`, `D = 1`); only its gradient
/// enters the residual, so it is determined up to a constant.
#[derive(Clone, Copy, Debug, Default)]
pub struct NsLift;

impl BoundaryLift for NsLift {
    fn n_fields(&self) -> usize {
        3
    }

    fn lift(&self, field: usize, x: &[f64], _w: &[f64]) -> (Jet2<f64>, Jet2<f64>) {
        if field == 2 {
            return (Jet2::constant(0.0), Jet2::constant(1.0));
        }
        let (xx, y, t) = (x[0], x[1], x[2]);
        let (sx, cx) = (PI * xx).sin_cos();
        let (sy, cy) = (PI * y).sin_cos();
        let d = Jet2 {
            v: sx * sy * t,
            g: [PI * cx * sy * t, PI * sx * cy * t, sx * sy],
            h: [-PI * PI * sx * sy * t, -PI * PI * sx * sy * t, 0.0],
            m: [PI * PI * cx * cy * t, PI * cx * sy, PI * sx * cy],
        };
        if field == 1 {
            return (Jet2::constant(0.0), d);
        }
        // B = q(x) t y^4 with q = 1 - (2x - 1)^6
        let a = 2.0 * xx - 1.0;
        let q = 1.0 - a.powi(6);
        let q1 = -12.0 * a.powi(5);
        let q2 = -120.0 * a.powi(4);
        let (y2, y3, y4) = (y * y, y * y * y, y * y * y * y);
        let b = Jet2 {
            v: q * t * y4,
            g: [q1 * t * y4, 4.0 * q * t * y3, q * y4],
            h: [q2 * t * y4, 12.0 * q * t * y2, 0.0],
            m: [4.0 * q1 * t * y3, q1 * y4, 4.0 * q * y3],
        };
        (b, d)
    }

    fn conditions(&self) -> Vec<BoundaryCondition> {
        let zero = |_: &[f64], _: &[f64]| 0.0;
        let mut out = vec![BoundaryCondition {
            name: "u1(x, 1, t) = (1 - (2x - 1)^6) t",
            field: 0,
            axis: 1,
            at: 1.0,
            value: |x, _| lid_profile(x[0], x[2]),
        }];
        let walls: [(&'static str, usize, usize, f64); 8] = [
            ("u1(0, y, t) = 0", 0, 0, 0.0),
            ("u1(1, y, t) = 0", 0, 0, 1.0),
            ("u1(x, 0, t) = 0", 0, 1, 0.0),
            ("u1(x, y, 0) = 0", 0, 2, 0.0),
            ("u2(0, y, t) = 0", 1, 0, 0.0),
            ("u2(1, y, t) = 0", 1, 0, 1.0),
            ("u2(x, 0, t) = 0", 1, 1, 0.0),
            ("u2(x, 1, t) = 0", 1, 1, 1.0),
        ];
        for (name, field, axis, at) in walls {
            out.push(BoundaryCondition { name, field, axis, at, value: zero });
        }
        out.push(BoundaryCondition { name: "u2(x, y, 0) = 0", field: 1, axis: 2, at: 0.0, value: zero });
        out
    }
}
