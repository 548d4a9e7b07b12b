//! Chebyshev series of the first kind with first and second derivatives.

use crate::error::{Error, Result};

/// Returns `(f, f', f'')` for `f(x) = sum_i c_i T_i(x)`.
pub fn chebyshev_eval(coeffs: &[f64], x: f64) -> Result<(f64, f64, f64)> {
    if !(-1.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("Chebyshev argument {x} outside [-1, 1]")));
    }
    Ok(chebyshev_unchecked(coeffs, x))
}

pub(crate) fn chebyshev_unchecked(coeffs: &[f64], x: f64) -> (f64, f64, f64) {
    // three-term recurrences for T_n, T_n' and T_n''
    let (mut t0, mut t1) = (1.0, x);
    let (mut d0, mut d1) = (0.0, 1.0);
    let (mut s0, mut s1) = (0.0, 0.0);
    let (mut f, mut df, mut ddf) = (0.0, 0.0, 0.0);
    for (i, &c) in coeffs.iter().enumerate() {
        let (t, d, s) = match i {
            0 => (t0, d0, s0),
            1 => (t1, d1, s1),
            _ => {
                let t2 = 2.0 * x * t1 - t0;
                let d2 = 2.0 * t1 + 2.0 * x * d1 - d0;
                let s2 = 4.0 * d1 + 2.0 * x * s1 - s0;
                (t0, t1, d0, d1, s0, s1) = (t1, t2, d1, d2, s1, s2);
                (t2, d2, s2)
            }
        };
        f += c * t;
        df += c * d;
        ddf += c * s;
    }
    (f, df, ddf)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn low_order_identities() {
        assert_eq!(chebyshev_eval(&[1.0], 0.3).unwrap(), (1.0, 0.0, 0.0));
        let (f, _, _) = chebyshev_eval(&[0.0, 0.0, 1.0], 0.5).unwrap();
        assert_eq!(f, -0.5);
        // T_3 = 4x^3 - 3x
        let (f, d, s) = chebyshev_eval(&[0.0, 0.0, 0.0, 1.0], 0.7).unwrap();
        assert!((f - (4.0 * 0.343 - 2.1)).abs() < 1e-15);
        assert!((d - (12.0 * 0.49 - 3.0)).abs() < 1e-14);
        assert!((s - 24.0 * 0.7).abs() < 1e-14);
    }

    #[test]
    fn matches_cosine_definition() {
        let c = [0.3, -0.8, 0.25, 0.6, -0.1, 0.05];
        for &x in &[-0.95, -0.2, 0.0, 0.61, 0.99] {
            let theta = f64::acos(x);
            let direct: f64 = c.iter().enumerate().map(|(n, a)| a * (n as f64 * theta).cos()).sum();
            assert!((chebyshev_eval(&c, x).unwrap().0 - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let c = [0.4, -0.2, 0.9, -0.7, 0.3];
        let h = 1e-6;
        for &x in &[-0.8, -0.1, 0.45, 0.9] {
            let (_, d, s) = chebyshev_eval(&c, x).unwrap();
            let f = |x| chebyshev_eval(&c, x).unwrap();
            let fd = (f(x + h).0 - f(x - h).0) / (2.0 * h);
            let fd2 = (f(x + h).1 - f(x - h).1) / (2.0 * h);
            assert!((d - fd).abs() <= 1e-8 * d.abs().max(1.0));
            assert!((s - fd2).abs() <= 1e-8 * s.abs().max(1.0));
        }
    }

    #[test]
    fn rejects_outside_interval() {
        assert!(chebyshev_eval(&[1.0], 1.0 + 1e-9).is_err());
        assert!(chebyshev_eval(&[1.0], -1.0).is_ok());
    }
}
