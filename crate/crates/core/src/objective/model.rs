//! Trainable state: forward and inverse networks plus the residual noise.

use serde::{Deserialize, Serialize};

use crate::domain::BoundaryLift;
use crate::emulator::{AlphaConfig, AlphaNet, GicConfig, GicNet};
use crate::engine::{sigma_t, ExpLinearBounds, Mat, ParamId, ParamStore, ScalarFn, Tape, Var};
use crate::error::Result;
use crate::pde::{Problem, ProblemConfig};
use crate::rng::{stream, TAG_INIT};

use super::config::ElboConfig;

/// Architecture sections of a configuration file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub problem: ProblemConfig,
    #[serde(default)]
    pub alpha: AlphaConfig,
    /// Problem-dependent default when absent.
    #[serde(default)]
    pub beta: Option<GicConfig>,
}

/// Residual noise scale: fixed, or `sigma_t(rho)` with a trainable `rho`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ResidualNoise {
    Fixed(f64),
    Learned { rho: ParamId, bounds: ExpLinearBounds },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub problem: Problem,
    pub alpha: AlphaNet,
    pub beta: GicNet,
    pub noise: ResidualNoise,
    pub store: ParamStore,
}

impl Model {
    /// Builds and initializes every network from `seed`.
    pub fn new(config: &ModelConfig, elbo: &ElboConfig, seed: u64) -> Result<Self> {
        let problem = Problem::new(&config.problem)?;
        elbo.validate(&problem)?;
        let mut rng = stream(seed, &[TAG_INIT]);
        let mut store = ParamStore::new();
        let alpha = AlphaNet::new(&mut store, &problem, &config.alpha, &mut rng)?;
        let beta_cfg = config.beta.clone().unwrap_or_else(|| GicNet::default_config(problem.kind));
        let beta = GicNet::new(&mut store, &problem, &beta_cfg, &mut rng)?;
        let eps = elbo.eps_r(&problem);
        let noise = if elbo.learn_eps_r(&problem) {
            let bounds = elbo.eps_r_bounds;
            let rho = store.add("eps_r.raw", Mat::from_elem((1, 1), bounds.inverse(eps)));
            ResidualNoise::Learned { rho, bounds }
        } else {
            ResidualNoise::Fixed(eps)
        };
        Ok(Self { config: config.clone(), problem, alpha, beta, noise, store })
    }

    pub fn eps_r(&self) -> f64 {
        match self.noise {
            ResidualNoise::Fixed(e) => e,
            ResidualNoise::Learned { rho, bounds } => sigma_t(self.store.get(rho)[[0, 0]], bounds),
        }
    }

    /// Residual noise as a `1 x 1` tape variable.
    pub fn eps_r_tape(&self, tape: &mut Tape) -> Var {
        match self.noise {
            ResidualNoise::Fixed(e) => tape.constant_scalar(e),
            ResidualNoise::Learned { rho, bounds } => {
                let r = tape.param(&self.store, rho);
                tape.map(r, ScalarFn::SigmaT(bounds), 0)
            }
        }
    }

    /// Lift factors `(B, D)` of every field at `points`, each `n x F`.
    pub fn lift_values(&self, points: &Mat, w: &[f64]) -> (Mat, Mat) {
        let n = points.nrows();
        let nf = self.problem.n_fields();
        let mut b = Mat::zeros((n, nf));
        let mut d = Mat::zeros((n, nf));
        for i in 0..n {
            let x = points.row(i).to_vec();
            for f in 0..nf {
                let (bj, dj) = self.problem.lift(f, &x, w);
                b[[i, f]] = bj.v;
                d[[i, f]] = dj.v;
            }
        }
        (b, d)
    }
}
