//! Residual operators, parameter priors and boundary lifts of the supported
//! problems.

pub mod burgers;
pub mod chebyshev;
pub mod ns;
pub mod poisson;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{BoundaryCondition, BoundaryLift, BoxDomain, GridMeasure, Jet2};
use crate::engine::{JetSpec, Real};
use crate::error::{Error, Result};

pub use burgers::{burgers_ic, burgers_residual, BurgersLift};
pub use chebyshev::chebyshev_eval;
pub use ns::{lid_profile, ns_residual, NsLift};
pub use poisson::{poisson_residual, PoissonLift};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProblemKind {
    #[serde(rename = "poisson1d")]
    Poisson1d,
    #[serde(rename = "burgers")]
    Burgers,
    #[serde(rename = "ns-lid")]
    NsLid,
}

impl ProblemKind {
    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::Poisson1d => "poisson1d",
            ProblemKind::Burgers => "burgers",
            ProblemKind::NsLid => "ns-lid",
        }
    }
}

fn default_n_z() -> usize {
    4
}

fn default_div_scale() -> f64 {
    ns::DIVERGENCE_SCALE
}

/// `[problem]` section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub name: ProblemKind,
    /// Number of Chebyshev coefficients of the Poisson diffusion field.
    #[serde(default = "default_n_z")]
    pub n_z: usize,
    #[serde(default = "default_div_scale")]
    pub divergence_scale: f64,
    #[serde(default)]
    pub grid: GridMeasure,
}

impl ProblemConfig {
    pub fn new(name: ProblemKind) -> Self {
        Self {
            name,
            n_z: default_n_z(),
            divergence_scale: default_div_scale(),
            grid: GridMeasure::Uniform,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Problem {
    pub kind: ProblemKind,
    pub domain: BoxDomain,
    pub z_prior: Vec<(f64, f64)>,
    pub w_prior: Vec<(f64, f64)>,
    pub divergence_scale: f64,
    pub grid: GridMeasure,
}

impl Problem {
    pub fn new(cfg: &ProblemConfig) -> Result<Self> {
        let (domain, z_prior, w_prior) = match cfg.name {
            ProblemKind::Poisson1d => {
                if cfg.n_z == 0 {
                    return Err(Error::Config("n_z must be at least 1".into()));
                }
                (BoxDomain::new(&[(-1.0, 1.0)])?, vec![(-1.0, 1.0); cfg.n_z], vec![(1.0, 2.0)])
            }
            ProblemKind::Burgers => (
                BoxDomain::new(&[(-1.0, 1.0), (0.0, 1.0)])?,
                vec![(1e-2, 1e-1), (0.5, 1.0)],
                vec![(0.5, 2.0)],
            ),
            ProblemKind::NsLid => (
                BoxDomain::new(&[(0.0, 1.0), (0.0, 1.0), (0.0, 1.0)])?,
                vec![(0.8, 1.0), (0.1, 1.0)],
                vec![],
            ),
        };
        if !(cfg.divergence_scale > 0.0) {
            return Err(Error::Config("divergence_scale must be positive".into()));
        }
        Ok(Self {
            kind: cfg.name,
            domain,
            z_prior,
            w_prior,
            divergence_scale: cfg.divergence_scale,
            grid: cfg.grid,
        })
    }

    pub fn of_kind(kind: ProblemKind) -> Self {
        Self::new(&ProblemConfig::new(kind)).expect("default problem config is valid")
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn n_z(&self) -> usize {
        self.z_prior.len()
    }

    pub fn n_w(&self) -> usize {
        self.w_prior.len()
    }

    pub fn n_fields(&self) -> usize {
        match self.kind {
            ProblemKind::NsLid => 3,
            _ => 1,
        }
    }

    pub fn n_residuals(&self) -> usize {
        self.n_fields()
    }

    /// Coordinates differentiated by the residual and which of them need
    /// second partials.
    pub fn jet_spec(&self) -> JetSpec {
        let second = match self.kind {
            ProblemKind::Poisson1d => vec![true],
            ProblemKind::Burgers => vec![true, false],
            ProblemKind::NsLid => vec![true, true, false],
        };
        JetSpec { wrt: (0..self.dim()).collect(), second, mixed: false }
    }

    pub fn default_eps_r(&self) -> f64 {
        match self.kind {
            ProblemKind::Burgers => 1e-1,
            _ => 1e-2,
        }
    }

    pub fn default_learn_eps_r(&self) -> bool {
        self.kind == ProblemKind::Burgers
    }

    /// Residual vector at `x` for already lifted fields.
    pub fn residual<T: Real>(&self, x: &[f64], z: &[f64], w: &[f64], f: &[Jet2<T>], out: &mut [T]) {
        match self.kind {
            ProblemKind::Poisson1d => out[0] = poisson_residual(z, w[0], x[0], &f[0]),
            ProblemKind::Burgers => out[0] = burgers_residual(z, &f[0]),
            ProblemKind::NsLid => ns_residual(z, self.divergence_scale, f, out),
        }
    }

    pub fn sample_z<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.z_prior.iter().map(|&(a, b)| rng.random_range(a..b)).collect()
    }

    pub fn sample_w<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.w_prior.iter().map(|&(a, b)| rng.random_range(a..b)).collect()
    }

    /// True when every entry lies inside its prior interval.
    pub fn in_prior(&self, z: &[f64], w: &[f64]) -> bool {
        let inside = |v: &[f64], p: &[(f64, f64)]| {
            v.len() == p.len() && v.iter().zip(p).all(|(&x, &(a, b))| x >= a && x <= b)
        };
        inside(z, &self.z_prior) && inside(w, &self.w_prior)
    }
}

impl BoundaryLift for Problem {
    fn n_fields(&self) -> usize {
        Problem::n_fields(self)
    }

    fn lift(&self, field: usize, x: &[f64], w: &[f64]) -> (Jet2<f64>, Jet2<f64>) {
        match self.kind {
            ProblemKind::Poisson1d => PoissonLift.lift(field, x, w),
            ProblemKind::Burgers => BurgersLift.lift(field, x, w),
            ProblemKind::NsLid => NsLift.lift(field, x, w),
        }
    }

    fn conditions(&self) -> Vec<BoundaryCondition> {
        match self.kind {
            ProblemKind::Poisson1d => PoissonLift.conditions(),
            ProblemKind::Burgers => BurgersLift.conditions(),
            ProblemKind::NsLid => NsLift.conditions(),
        }
    }
}
