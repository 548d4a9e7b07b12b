//! Finite-difference reference solvers.

use crate::engine::{sigmoid, softplus};
use crate::error::{Error, Result};
use crate::pde::burgers_ic;
use crate::pde::chebyshev::chebyshev_unchecked;
use crate::pde::poisson::K_FLOOR;

use super::interp::{Interpolant, UniformAxis};

pub const RESIDUAL_TOL: f64 = 1e-10;
pub const MAX_NEWTON: usize = 200;

/// Nodal solution with solver diagnostics and an off-node evaluator.
#[derive(Clone, Debug, PartialEq)]
pub struct FdSolution {
    pub interp: Interpolant,
    pub newton_iterations: usize,
    /// Infinity norm of the final discrete residual (largest over time steps).
    pub residual_norm: f64,
}

impl FdSolution {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.interp.eval(x)
    }

    pub fn nodes(&self, axis: usize) -> Vec<f64> {
        self.interp.axes[axis].nodes()
    }

    pub fn values(&self) -> &[f64] {
        &self.interp.values
    }
}

/// Solves `a_i x_{i-1} + b_i x_i + c_i x_{i+1} = d_i` in place (Thomas).
pub fn thomas(a: &[f64], b: &[f64], c: &[f64], d: &mut [f64]) -> Result<()> {
    let n = d.len();
    let mut cp = vec![0.0; n];
    let mut beta = b[0];
    if beta == 0.0 {
        return Err(Error::Solver("zero pivot in tridiagonal solve".into()));
    }
    d[0] /= beta;
    for i in 1..n {
        cp[i - 1] = c[i - 1] / beta;
        beta = b[i] - a[i] * cp[i - 1];
        if beta == 0.0 || !beta.is_finite() {
            return Err(Error::Solver("zero pivot in tridiagonal solve".into()));
        }
        d[i] = (d[i] - a[i] * d[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        d[i] -= cp[i] * d[i + 1];
    }
    Ok(())
}

fn inf_norm(r: &[f64]) -> f64 {
    r.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Damped Newton on a tridiagonal system over the interior unknowns.
/// `system(u, r, a, b, c)` fills the residual and Jacobian bands.
fn newton<F>(u: &mut [f64], mut system: F) -> Result<(usize, f64)>
where
    F: FnMut(&[f64], &mut [f64], &mut [f64], &mut [f64], &mut [f64]),
{
    let n = u.len();
    let (mut r, mut a, mut b, mut c) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut scratch = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    system(u, &mut r, &mut a, &mut b, &mut c);
    let mut norm = inf_norm(&r);
    for it in 0..MAX_NEWTON {
        if norm <= RESIDUAL_TOL {
            return Ok((it, norm));
        }
        let mut du: Vec<f64> = r.iter().map(|x| -x).collect();
        thomas(&a, &b, &c, &mut du)?;
        let mut step = 1.0;
        loop {
            let trial: Vec<f64> = u.iter().zip(&du).map(|(x, d)| x + step * d).collect();
            let (r2, a2, b2, c2) = &mut scratch;
            system(&trial, r2, a2, b2, c2);
            let n2 = inf_norm(r2);
            if n2 < norm || step < 1e-4 {
                u.copy_from_slice(&trial);
                std::mem::swap(&mut r, r2);
                std::mem::swap(&mut a, a2);
                std::mem::swap(&mut b, b2);
                std::mem::swap(&mut c, c2);
                if !(n2 < norm) && n2 > RESIDUAL_TOL {
                    return Err(Error::Solver(format!("Newton stagnated at residual {n2:e}")));
                }
                norm = n2;
                break;
            }
            step *= 0.5;
        }
    }
    if norm <= RESIDUAL_TOL {
        Ok((MAX_NEWTON, norm))
    } else {
        Err(Error::Solver(format!("Newton did not converge in {MAX_NEWTON} iterations; residual {norm:e}")))
    }
}

/// Conservative solve of `d/dx (k(u, x) du/dx) = w`, `u(-1) = u(1) = 0`,
/// with `k = softplus(u c(x)) + 0.1` and `c` the Chebyshev series of `z`.
pub fn solve_poisson(z: &[f64], w: f64, n_nodes: usize) -> Result<FdSolution> {
    if n_nodes < 33 {
        return Err(Error::Domain("Poisson solver needs at least 33 nodes".into()));
    }
    let axis = UniformAxis::new(-1.0, 1.0, n_nodes)?;
    let h = axis.h();
    let xs = axis.nodes();
    // diffusion coefficient series at the cell midpoints
    let cm: Vec<f64> =
        (0..n_nodes - 1).map(|i| chebyshev_unchecked(z, 0.5 * (xs[i] + xs[i + 1])).0).collect();
    let m = n_nodes - 2;
    let mut u = vec![0.0; m];
    let full = |u: &[f64], i: usize| if i == 0 || i == n_nodes - 1 { 0.0 } else { u[i - 1] };
    let (iters, norm) = newton(&mut u, |u, r, a, b, c| {
        // flux on cell j between nodes j and j + 1
        let mut flux = vec![(0.0, 0.0, 0.0); n_nodes - 1];
        for (j, f) in flux.iter_mut().enumerate() {
            let (ul, ur) = (full(u, j), full(u, j + 1));
            let arg = 0.5 * (ul + ur) * cm[j];
            let k = softplus(arg) + K_FLOOR;
            let dk = sigmoid(arg) * cm[j] * 0.5;
            let g = (ur - ul) / h;
            // value, derivative w.r.t. left node, w.r.t. right node
            *f = (k * g, dk * g - k / h, dk * g + k / h);
        }
        for i in 0..m {
            let (fl, fr) = (flux[i], flux[i + 1]);
            r[i] = (fr.0 - fl.0) / h - w;
            a[i] = -fl.1 / h;
            b[i] = (fr.1 - fl.2) / h;
            c[i] = fr.2 / h;
        }
    })
    .map_err(|e| match e {
        Error::Solver(s) => Error::Solver(format!("Poisson z={z:?} w={w}: {s}")),
        other => other,
    })?;
    let mut values = vec![0.0; n_nodes];
    values[1..n_nodes - 1].copy_from_slice(&u);
    Ok(FdSolution { interp: Interpolant::new(vec![axis], values)?, newton_iterations: iters, residual_norm: norm })
}

/// Crank-Nicolson solve of `u_t + z1 u u_x - z0 u_xx = 0` on `[-1, 1] x [0, 1]`
/// with `nx` spatial nodes and `nt` time steps. Values are stored space-major
/// on the `(x, t)` grid.
pub fn solve_burgers(z0: f64, z1: f64, w: f64, nx: usize, nt: usize) -> Result<FdSolution> {
    if nx < 64 || nt < 64 {
        return Err(Error::Domain("Burgers solver needs nx, nt >= 64".into()));
    }
    if !(z0 > 0.0) {
        return Err(Error::Domain("Burgers viscosity must be positive".into()));
    }
    let xa = UniformAxis::new(-1.0, 1.0, nx)?;
    let ta = UniformAxis::new(0.0, 1.0, nt + 1)?;
    let h = xa.h();
    let dt = 1.0 / nt as f64;
    let xs = xa.nodes();
    let m = nx - 2;
    let mut levels: Vec<Vec<f64>> = Vec::with_capacity(nt + 1);
    let mut cur: Vec<f64> = xs.iter().map(|&x| burgers_ic(w, x)).collect();
    cur[0] = 0.0;
    cur[nx - 1] = 0.0;
    levels.push(cur.clone());

    let op = |u: &[f64], i: usize| {
        z1 * u[i] * (u[i + 1] - u[i - 1]) / (2.0 * h) - z0 * (u[i + 1] - 2.0 * u[i] + u[i - 1]) / (h * h)
    };
    let mut total_iters = 0;
    let mut worst: f64 = 0.0;
    for step in 0..nt {
        let old = cur.clone();
        let n_old: Vec<f64> = (1..nx - 1).map(|i| op(&old, i)).collect();
        let mut u: Vec<f64> = old[1..nx - 1].to_vec();
        let (iters, norm) = newton(&mut u, |u, r, a, b, c| {
            let mut full = vec![0.0; nx];
            full[1..nx - 1].copy_from_slice(u);
            for k in 0..m {
                let i = k + 1;
                r[k] = (full[i] - old[i]) / dt + 0.5 * (op(&full, i) + n_old[k]);
                a[k] = 0.5 * (-z1 * full[i] / (2.0 * h) - z0 / (h * h));
                b[k] = 1.0 / dt + 0.5 * (z1 * (full[i + 1] - full[i - 1]) / (2.0 * h) + 2.0 * z0 / (h * h));
                c[k] = 0.5 * (z1 * full[i] / (2.0 * h) - z0 / (h * h));
            }
        })
        .map_err(|e| match e {
            Error::Solver(s) => Error::Solver(format!("Burgers time step {step}: {s}")),
            other => other,
        })?;
        total_iters += iters;
        worst = worst.max(norm);
        cur[1..nx - 1].copy_from_slice(&u);
        levels.push(cur.clone());
    }
    let mut values = Vec::with_capacity(nx * (nt + 1));
    for i in 0..nx {
        for lv in &levels {
            values.push(lv[i]);
        }
    }
    Ok(FdSolution {
        interp: Interpolant::new(vec![xa, ta], values)?,
        newton_iterations: total_iters,
        residual_norm: worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Jet2;
    use crate::pde::{poisson_residual, Problem, ProblemKind};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn thomas_matches_dense_solve() {
        let a = [0.0, 1.0, -2.0, 0.5];
        let b = [4.0, 5.0, 6.0, 3.0];
        let c = [1.0, -1.0, 2.0, 0.0];
        let x = [1.0, -2.0, 0.5, 3.0];
        let mut d: Vec<f64> = (0..4)
            .map(|i| {
                let mut s = b[i] * x[i];
                if i > 0 {
                    s += a[i] * x[i - 1];
                }
                if i < 3 {
                    s += c[i] * x[i + 1];
                }
                s
            })
            .collect();
        thomas(&a, &b, &c, &mut d).unwrap();
        for i in 0..4 {
            assert!((d[i] - x[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn poisson_constant_coefficient_closed_form() {
        let w = 1.7;
        let sol = solve_poisson(&[0.0; 4], w, 513).unwrap();
        let k = 2f64.ln() + 0.1;
        for (x, u) in sol.nodes(0).iter().zip(sol.values()) {
            assert!((u - w * (x * x - 1.0) / (2.0 * k)).abs() <= 1e-6);
        }
        assert!(sol.residual_norm <= RESIDUAL_TOL);
    }

    #[test]
    fn poisson_homogeneous_is_zero() {
        let sol = solve_poisson(&[0.0; 4], 0.0, 65).unwrap();
        assert!(sol.values().iter().all(|&u| u == 0.0));
    }

    #[test]
    fn rejects_coarse_grids() {
        assert!(matches!(solve_poisson(&[0.0], 1.0, 32), Err(Error::Domain(_))));
        assert!(matches!(solve_burgers(0.05, 1.0, 1.0, 63, 64), Err(Error::Domain(_))));
    }

    fn poisson_order(z: &[f64], w: f64) -> f64 {
        let s: Vec<FdSolution> = [129, 257, 513].iter().map(|&n| solve_poisson(z, w, n).unwrap()).collect();
        let diff = |a: &FdSolution, b: &FdSolution, stride: usize| {
            a.values()
                .iter()
                .enumerate()
                .map(|(i, u)| (u - b.values()[i * stride]).abs())
                .fold(0.0, f64::max)
        };
        let e1 = diff(&s[0], &s[1], 2);
        let e2 = diff(&s[1], &s[2], 2);
        (e1 / e2).log2()
    }

    #[test]
    fn poisson_self_convergence_is_second_order() {
        let p = Problem::of_kind(ProblemKind::Poisson1d);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..3 {
            let z = p.sample_z(&mut rng);
            let w = p.sample_w(&mut rng);
            let order = poisson_order(&z, w[0]);
            assert!(order >= 1.9, "order {order} at z={z:?}");
        }
    }

    #[test]
    fn poisson_interpolant_residual_shrinks_under_refinement() {
        let z = [0.6, -0.4, 0.3, 0.8];
        let w = 1.4;
        let norm = |n: usize| {
            let s = solve_poisson(&z, w, n).unwrap();
            (1..40)
                .map(|i| {
                    let x = -0.95 + 1.9 * i as f64 / 40.0 + 0.0123;
                    let j = s.interp.eval_jet(&[x]);
                    let u = Jet2::scalar(j.v, [j.g[0], 0.0, 0.0], [j.h[0], 0.0, 0.0]);
                    poisson_residual(&z, w, x, &u).abs()
                })
                .fold(0.0, f64::max)
        };
        let (a, b, c) = (norm(65), norm(129), norm(257));
        assert!(b < a && c < b, "{a} {b} {c}");
    }

    #[test]
    fn burgers_initial_slice_is_exact() {
        let w = 1.3;
        let sol = solve_burgers(0.05, 0.8, w, 65, 64).unwrap();
        let xs = sol.nodes(0);
        let nt1 = sol.interp.axes[1].n;
        for (i, &x) in xs.iter().enumerate() {
            let expect = if i == 0 || i + 1 == xs.len() { 0.0 } else { burgers_ic(w, x) };
            assert_eq!(sol.values()[i * nt1], expect);
        }
    }

    #[test]
    fn heat_limit_energy_decays() {
        let sol = solve_burgers(0.05, 0.0, 1.7, 129, 128).unwrap();
        let nt1 = sol.interp.axes[1].n;
        let nx = sol.interp.axes[0].n;
        let energy = |k: usize| (0..nx).map(|i| sol.values()[i * nt1 + k].powi(2)).sum::<f64>();
        for k in 1..nt1 {
            assert!(energy(k) < energy(k - 1));
        }
    }

    #[test]
    fn burgers_self_convergence_is_second_order() {
        let p = Problem::of_kind(ProblemKind::Burgers);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let z = p.sample_z(&mut rng);
        let w = p.sample_w(&mut rng);
        let sols: Vec<FdSolution> = [(129, 128), (257, 256), (513, 512)]
            .iter()
            .map(|&(nx, nt)| solve_burgers(z[0], z[1], w[0], nx, nt).unwrap())
            .collect();
        // compare on the coarse space-time nodes
        let diff = |a: &FdSolution, b: &FdSolution| {
            let (nxa, nta) = (a.interp.axes[0].n, a.interp.axes[1].n);
            let ntb = b.interp.axes[1].n;
            let mut m: f64 = 0.0;
            for i in 0..nxa {
                for k in 0..nta {
                    m = m.max((a.values()[i * nta + k] - b.values()[2 * i * ntb + 2 * k]).abs());
                }
            }
            m
        };
        let order = (diff(&sols[0], &sols[1]) / diff(&sols[1], &sols[2])).log2();
        assert!(order >= 1.8, "order {order} at z={z:?} w={w:?}");
    }
}
