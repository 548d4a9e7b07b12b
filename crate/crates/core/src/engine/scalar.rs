//! Pointwise scalar functions with closed-form derivatives up to third order.
//!
//! The tape differentiates through jets, so an activation used at derivative
//! order `k` must also expose order `k + 1` for the reverse sweep. Everything
//! here stops at order three, which covers second-order spatial jets.

use serde::{Deserialize, Serialize};

/// Bounds of the exp-linear squashing used for variances.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpLinearBounds {
    pub lo: f64,
    pub hi: f64,
}

impl Default for ExpLinearBounds {
    fn default() -> Self {
        Self { lo: 1e-5, hi: 1.0 }
    }
}

impl ExpLinearBounds {
    pub fn new(lo: f64, hi: f64) -> Option<Self> {
        (lo > 0.0 && hi > lo && hi.is_finite()).then_some(Self { lo, hi })
    }

    /// Inverse of [`sigma_t`] on the open interval `(lo, hi)`.
    pub fn inverse(&self, y: f64) -> f64 {
        let s = ((y - self.lo) / (self.hi - self.lo)).clamp(1e-300, 1.0 - 1e-16);
        let p = s / (1.0 - s);
        // softplus^{-1}(p) = log(exp(p) - 1)
        if p > 30.0 {
            p
        } else {
            p.exp_m1().ln()
        }
    }
}

/// Numerically stable logistic sigmoid.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Swish activation `x * sigmoid(x)`.
#[inline]
pub fn swish(x: f64) -> f64 {
    x * sigmoid(x)
}

/// Exp-linear constraint: `lo + (hi - lo) * p / (1 + p)` with `p = softplus(x)`.
#[inline]
pub fn sigma_t(x: f64, bounds: ExpLinearBounds) -> f64 {
    let p = softplus(x);
    bounds.lo + (bounds.hi - bounds.lo) * (p / (1.0 + p))
}

/// A differentiable elementwise map.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ScalarFn {
    Swish,
    Sigmoid,
    Softplus,
    SigmaT(ExpLinearBounds),
    Sqrt,
    Exp,
    Log,
    Recip,
    Sin,
    Cos,
}

impl ScalarFn {
    /// Returns `[f, f', f'', f''']` at `x`.
    pub fn derivs(self, x: f64) -> [f64; 4] {
        match self {
            ScalarFn::Sigmoid => sigmoid_derivs(x),
            ScalarFn::Swish => {
                let [s, s1, s2, s3] = sigmoid_derivs(x);
                [x * s, s + x * s1, 2.0 * s1 + x * s2, 3.0 * s2 + x * s3]
            }
            ScalarFn::Softplus => {
                let [s, s1, s2, _] = sigmoid_derivs(x);
                [softplus(x), s, s1, s2]
            }
            ScalarFn::SigmaT(b) => {
                let p = softplus(x);
                let [p1, p2, p3, _] = sigmoid_derivs(x);
                let q = 1.0 / (1.0 + p);
                let h = p * q;
                let h1 = q * q;
                let h2 = -2.0 * h1 * q;
                let h3 = 6.0 * h1 * h1;
                let span = b.hi - b.lo;
                [
                    b.lo + span * h,
                    span * h1 * p1,
                    span * (h2 * p1 * p1 + h1 * p2),
                    span * (h3 * p1 * p1 * p1 + 3.0 * h2 * p1 * p2 + h1 * p3),
                ]
            }
            ScalarFn::Sqrt => {
                let r = x.sqrt();
                let inv = 1.0 / x;
                let d1 = 0.5 / r;
                let d2 = -0.5 * d1 * inv;
                let d3 = -1.5 * d2 * inv;
                [r, d1, d2, d3]
            }
            ScalarFn::Exp => {
                let e = x.exp();
                [e, e, e, e]
            }
            ScalarFn::Log => {
                let inv = 1.0 / x;
                [x.ln(), inv, -inv * inv, 2.0 * inv * inv * inv]
            }
            ScalarFn::Recip => {
                let inv = 1.0 / x;
                let i2 = inv * inv;
                [inv, -i2, 2.0 * i2 * inv, -6.0 * i2 * i2]
            }
            ScalarFn::Sin => {
                let (s, c) = x.sin_cos();
                [s, c, -s, -c]
            }
            ScalarFn::Cos => {
                let (s, c) = x.sin_cos();
                [c, -s, -c, s]
            }
        }
    }

    /// Derivative of the given order (0..=3).
    #[inline]
    pub fn eval(self, x: f64, order: u8) -> f64 {
        match (self, order) {
            (ScalarFn::Swish, 0) => swish(x),
            (ScalarFn::Sigmoid, 0) => sigmoid(x),
            (ScalarFn::Softplus, 0) => softplus(x),
            (ScalarFn::SigmaT(b), 0) => sigma_t(x, b),
            (ScalarFn::Sqrt, 0) => x.sqrt(),
            (ScalarFn::Exp, 0) => x.exp(),
            (ScalarFn::Log, 0) => x.ln(),
            (ScalarFn::Recip, 0) => 1.0 / x,
            _ => self.derivs(x)[order as usize],
        }
    }
}

fn sigmoid_derivs(x: f64) -> [f64; 4] {
    let s = sigmoid(x);
    // 1 - s computed as sigmoid(-x) to avoid cancellation for large x
    let s1 = s * sigmoid(-x);
    let s2 = s1 * (1.0 - 2.0 * s);
    let s3 = s1 * (1.0 - 6.0 * s1);
    [s, s1, s2, s3]
}

#[cfg(test)]
mod tests {
    use super::*;

    const ALL: [ScalarFn; 10] = [
        ScalarFn::Swish,
        ScalarFn::Sigmoid,
        ScalarFn::Softplus,
        ScalarFn::SigmaT(ExpLinearBounds { lo: 1e-5, hi: 1.0 }),
        ScalarFn::Sqrt,
        ScalarFn::Exp,
        ScalarFn::Log,
        ScalarFn::Recip,
        ScalarFn::Sin,
        ScalarFn::Cos,
    ];

    #[test]
    fn derivatives_match_central_differences() {
        let h = 1e-5;
        for f in ALL {
            for &x in &[0.3, 0.9, 1.7, 2.5] {
                let d = f.derivs(x);
                for order in 0..3 {
                    let fd = (f.derivs(x + h)[order] - f.derivs(x - h)[order]) / (2.0 * h);
                    let scale = d[order + 1].abs().max(1e-3);
                    assert!(
                        (fd - d[order + 1]).abs() / scale < 1e-6,
                        "{f:?} order {} at {x}: {fd} vs {}",
                        order + 1,
                        d[order + 1]
                    );
                }
            }
        }
    }

    #[test]
    fn fast_paths_agree_with_derivs() {
        for f in ALL {
            for &x in &[0.25, 1.5] {
                assert_eq!(f.eval(x, 0), f.derivs(x)[0], "{f:?}");
            }
        }
    }

    #[test]
    fn swish_derivative_identity() {
        // s'(x) = s(x) + sigmoid(x) (1 - s(x))
        for i in 0..1000 {
            let x = -20.0 + 40.0 * (i as f64) / 999.0;
            let [s, s1, _, _] = ScalarFn::Swish.derivs(x);
            let tail = sigmoid(x) * (1.0 - s);
            let rhs = s + tail;
            // rounding budget of the two-term sum on the right-hand side
            let ulp = f64::EPSILON * (s.abs() + tail.abs()).max(1.0);
            assert!((s1 - rhs).abs() <= 4.0 * ulp, "{x}: {s1} vs {rhs}");
        }
    }

    #[test]
    fn stable_at_extremes() {
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0);
    }

    #[test]
    fn sigma_t_inverse_roundtrip() {
        let b = ExpLinearBounds::default();
        for &y in &[1e-4, 1e-2, 0.1, 0.5, 0.9] {
            let x = b.inverse(y);
            assert!((sigma_t(x, b) - y).abs() < 1e-12 * y.max(1e-3), "{y}");
        }
    }
}
