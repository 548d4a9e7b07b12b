//! Forward-mode dual numbers with a fixed number of tangent slots.
//!
//! Residual operators are written once over [`Real`] and evaluated either on
//! plain `f64` or on [`Dual`] to obtain their partials with respect to every
//! jet component of the input fields.

use std::ops::{Add, Div, Mul, Neg, Sub};

use super::scalar::{sigmoid, softplus};

/// Tangent capacity. Three fields with value, three first and two second
/// partials need eighteen slots.
pub const DUAL_MAX: usize = 18;

pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
{
    fn cst(x: f64) -> Self;
    fn re(&self) -> f64;
    fn softplus(self) -> Self;
    fn sigmoid(self) -> Self;
}

impl Real for f64 {
    fn cst(x: f64) -> Self {
        x
    }
    fn re(&self) -> f64 {
        *self
    }
    fn softplus(self) -> Self {
        softplus(self)
    }
    fn sigmoid(self) -> Self {
        sigmoid(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual {
    pub v: f64,
    pub d: [f64; DUAL_MAX],
}

impl Dual {
    /// Independent variable `slot` with value `v`.
    pub fn var(v: f64, slot: usize) -> Self {
        let mut d = [0.0; DUAL_MAX];
        d[slot] = 1.0;
        Self { v, d }
    }

    fn chain(self, f: f64, df: f64) -> Self {
        let mut d = self.d;
        d.iter_mut().for_each(|x| *x *= df);
        Self { v: f, d }
    }
}

impl Real for Dual {
    fn cst(x: f64) -> Self {
        Self { v: x, d: [0.0; DUAL_MAX] }
    }
    fn re(&self) -> f64 {
        self.v
    }
    fn softplus(self) -> Self {
        self.chain(softplus(self.v), sigmoid(self.v))
    }
    fn sigmoid(self) -> Self {
        let s = sigmoid(self.v);
        self.chain(s, s * (1.0 - s))
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(mut self, o: Dual) -> Dual {
        self.v += o.v;
        self.d.iter_mut().zip(o.d).for_each(|(a, b)| *a += b);
        self
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(mut self, o: Dual) -> Dual {
        self.v -= o.v;
        self.d.iter_mut().zip(o.d).for_each(|(a, b)| *a -= b);
        self
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        let mut d = [0.0; DUAL_MAX];
        for (i, x) in d.iter_mut().enumerate() {
            *x = self.d[i] * o.v + self.v * o.d[i];
        }
        Dual { v: self.v * o.v, d }
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        let inv = 1.0 / o.v;
        let q = self.v * inv;
        let mut d = [0.0; DUAL_MAX];
        for (i, x) in d.iter_mut().enumerate() {
            *x = (self.d[i] - q * o.d[i]) * inv;
        }
        Dual { v: q, d }
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        self * -1.0
    }
}

impl Add<f64> for Dual {
    type Output = Dual;
    fn add(mut self, c: f64) -> Dual {
        self.v += c;
        self
    }
}

impl Sub<f64> for Dual {
    type Output = Dual;
    fn sub(mut self, c: f64) -> Dual {
        self.v -= c;
        self
    }
}

impl Mul<f64> for Dual {
    type Output = Dual;
    fn mul(mut self, c: f64) -> Dual {
        self.v *= c;
        self.d.iter_mut().for_each(|x| *x *= c);
        self
    }
}
