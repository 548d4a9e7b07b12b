//! Nonlinear 1D Poisson problem `d/dx (k(u, x) du/dx) - w = 0` on `[-1, 1]`
//! with `k(u, x) = softplus(u sum_i z_i T_i(x)) + 0.1`.

use std::f64::consts::FRAC_PI_2;

use crate::domain::{BoundaryCondition, BoundaryLift, Jet2};
use crate::engine::Real;

use super::chebyshev::chebyshev_unchecked;

pub const K_FLOOR: f64 = 0.1;

/// Residual at `x` for the lifted field `u` (value, `u_x`, `u_xx`).
pub fn poisson_residual<T: Real>(z: &[f64], w: f64, x: f64, u: &Jet2<T>) -> T {
    let (c, dc, _) = chebyshev_unchecked(z, x);
    let a = u.v * c;
    let k = a.softplus() + K_FLOOR;
    // dk/dx through both the explicit x and u(x) dependence
    let dk = a.sigmoid() * (u.g[0] * c + u.v * dc);
    dk * u.g[0] + k * u.h[0] - w
}

/// `B = 0`, `D = cos(pi x / 2)`.
#[derive(Clone, Copy, Debug, Default)]
pub struct PoissonLift;

impl BoundaryLift for PoissonLift {
    fn n_fields(&self) -> usize {
        1
    }

    fn lift(&self, _field: usize, x: &[f64], _w: &[f64]) -> (Jet2<f64>, Jet2<f64>) {
        let a = FRAC_PI_2 * x[0];
        let (s, c) = a.sin_cos();
        let d = Jet2::scalar(c, [-FRAC_PI_2 * s, 0.0, 0.0], [-FRAC_PI_2 * FRAC_PI_2 * c, 0.0, 0.0]);
        (Jet2::constant(0.0), d)
    }

    fn conditions(&self) -> Vec<BoundaryCondition> {
        vec![
            BoundaryCondition { name: "u(-1) = 0", field: 0, axis: 0, at: -1.0, value: |_, _| 0.0 },
            BoundaryCondition { name: "u(1) = 0", field: 0, axis: 0, at: 1.0, value: |_, _| 0.0 },
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_field_gives_minus_w() {
        let u = Jet2::<f64>::constant(0.0);
        assert_eq!(poisson_residual(&[0.3, -0.5, 0.2, 0.9], 1.7, 0.25, &u), -1.7);
    }

    #[test]
    fn zero_coefficients_give_constant_diffusion() {
        let u = Jet2::scalar(0.8, [1.3, 0.0, 0.0], [-2.5, 0.0, 0.0]);
        let r = poisson_residual(&[0.0; 4], 1.2, -0.4, &u);
        let k = 2f64.ln() + 0.1;
        assert!((r - (k * -2.5 - 1.2)).abs() < 1e-15);
    }

    #[test]
    fn linear_in_w() {
        let u = Jet2::scalar(0.3, [0.7, 0.0, 0.0], [0.1, 0.0, 0.0]);
        let z = [0.5, -0.3, 0.8, 0.1];
        let r1 = poisson_residual(&z, 1.1, 0.2, &u);
        let r2 = poisson_residual(&z, 1.9, 0.2, &u);
        assert!(((r2 - r1) - (1.1 - 1.9)).abs() < 1e-14);
    }

    #[test]
    fn flux_form_matches_finite_differences() {
        // u(x) = sin(2x) + 0.3 x: compare with d/dx(k u_x) by differencing the flux
        let z = [0.4, -0.6, 0.3, 0.7];
        let u = |x: f64| (2.0 * x).sin() + 0.3 * x;
        let ux = |x: f64| 2.0 * (2.0 * x).cos() + 0.3;
        let flux = |x: f64| {
            let (c, _, _) = chebyshev_unchecked(&z, x);
            (crate::engine::softplus(u(x) * c) + K_FLOOR) * ux(x)
        };
        let x = 0.35;
        let h = 1e-5;
        let fd = (flux(x + h) - flux(x - h)) / (2.0 * h) - 1.5;
        let jet = Jet2::scalar(u(x), [ux(x), 0.0, 0.0], [-4.0 * (2.0 * x).sin(), 0.0, 0.0]);
        let r = poisson_residual(&z, 1.5, x, &jet);
        assert!((r - fd).abs() < 1e-8);
    }
}
