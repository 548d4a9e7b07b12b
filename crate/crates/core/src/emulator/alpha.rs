//! Forward emulator: a swish network mapping `(x, z, w)` to the per-point
//! heads `(mu, lambda, V)` of a low-rank Gaussian over raw field values.

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{ExpLinearBounds, JetSpec, Mat, Mlp, ParamStore, ScalarFn, Tape, TapeJet, Var};
use crate::error::{Error, Result};
use crate::gauss::{stack_fields, LowRankGaussian};
use crate::pde::Problem;

fn default_width() -> usize {
    128
}
fn default_depth() -> usize {
    4
}
fn default_lambda_init() -> f64 {
    1e-2
}

/// `[alpha]` section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaConfig {
    #[serde(default = "default_width")]
    pub width: usize,
    /// Number of hidden layers.
    #[serde(default = "default_depth")]
    pub depth: usize,
    /// Columns of `V`; zero selects a diagonal covariance.
    #[serde(default)]
    pub rank: usize,
    #[serde(default)]
    pub lambda_bounds: ExpLinearBounds,
    /// Diagonal variance produced at initialization.
    #[serde(default = "default_lambda_init")]
    pub lambda_init: f64,
}

impl Default for AlphaConfig {
    fn default() -> Self {
        Self {
            width: default_width(),
            depth: default_depth(),
            rank: 0,
            lambda_bounds: ExpLinearBounds::default(),
            lambda_init: default_lambda_init(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaNet {
    pub mlp: Mlp,
    pub dim: usize,
    pub n_z: usize,
    pub n_w: usize,
    pub n_fields: usize,
    pub rank: usize,
    pub bounds: ExpLinearBounds,
    /// `(center, half-width)` of each prior interval of `z` then `w`.
    pub scaling: Vec<(f64, f64)>,
}

/// Per-field heads on the tape (values only), each `n x 1` except `v`.
pub struct FieldHeads {
    pub mu: Var,
    pub lambda: Var,
    /// `n x rank`; a zero-width constant in diagonal mode.
    pub v: Var,
}

/// Per-field heads carrying spatial jets.
pub struct FieldJets {
    pub mu: TapeJet,
    pub lambda: TapeJet,
    pub v: Option<TapeJet>,
}

impl AlphaNet {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        problem: &Problem,
        cfg: &AlphaConfig,
        rng: &mut R,
    ) -> Result<Self> {
        if cfg.width == 0 || cfg.depth == 0 {
            return Err(Error::Config("alpha width and depth must be positive".into()));
        }
        let bounds = cfg.lambda_bounds;
        if ExpLinearBounds::new(bounds.lo, bounds.hi).is_none() {
            return Err(Error::Config(format!("invalid lambda bounds {bounds:?}")));
        }
        if !(cfg.lambda_init > bounds.lo && cfg.lambda_init < bounds.hi) {
            return Err(Error::Config("lambda_init must lie inside lambda_bounds".into()));
        }
        let (dim, n_z, n_w, n_fields) =
            (problem.dim(), problem.n_z(), problem.n_w(), problem.n_fields());
        let head = 2 + cfg.rank;
        let mut widths = vec![dim + n_z + n_w];
        widths.extend(std::iter::repeat_n(cfg.width, cfg.depth));
        widths.push(n_fields * head);
        let mlp = Mlp::new(store, "alpha", &widths, rng);
        let raw = bounds.inverse(cfg.lambda_init);
        let bias = store.get_mut(mlp.output_bias());
        for f in 0..n_fields {
            bias[[0, f * head + 1]] = raw;
        }
        let scaling =
            problem.z_prior.iter().chain(&problem.w_prior).map(|&(a, b)| (0.5 * (a + b), 0.5 * (b - a))).collect();
        Ok(Self { mlp, dim, n_z, n_w, n_fields, rank: cfg.rank, bounds, scaling })
    }

    pub fn head_width(&self) -> usize {
        2 + self.rank
    }

    /// Network input rows `[x, z, w]`, with `z` and `w` mapped affinely so
    /// their prior intervals become `[-1, 1]`.
    pub fn input(&self, points: &Mat, z: &[f64], w: &[f64]) -> Result<Mat> {
        if points.ncols() != self.dim || z.len() != self.n_z || w.len() != self.n_w {
            return Err(Error::Shape(format!(
                "expected x in R^{}, z in R^{}, w in R^{}; got {}, {}, {}",
                self.dim,
                self.n_z,
                self.n_w,
                points.ncols(),
                z.len(),
                w.len()
            )));
        }
        let n = points.nrows();
        let mut input = Array2::zeros((n, self.dim + self.n_z + self.n_w));
        input.slice_mut(ndarray::s![.., ..self.dim]).assign(points);
        for i in 0..n {
            for (k, (&v, &(c, h))) in z.iter().chain(w).zip(&self.scaling).enumerate() {
                input[[i, self.dim + k]] = (v - c) / h;
            }
        }
        Ok(input)
    }

    /// Per-field Gaussians over raw values at `points`, and their stack.
    pub fn predict(
        &self,
        store: &ParamStore,
        points: &Mat,
        z: &[f64],
        w: &[f64],
    ) -> Result<(Vec<LowRankGaussian>, LowRankGaussian)> {
        let out = self.mlp.eval(store, &self.input(points, z, w)?)?;
        let h = self.head_width();
        let mut fields = Vec::with_capacity(self.n_fields);
        for f in 0..self.n_fields {
            let c = f * h;
            let mean: Array1<f64> = out.column(c).to_owned();
            let lambda = out.column(c + 1).mapv(|o| crate::engine::sigma_t(o, self.bounds));
            let v = out.slice(ndarray::s![.., c + 2..c + h]).to_owned();
            fields.push(LowRankGaussian::new(mean, lambda, v)?);
        }
        let joint = stack_fields(&fields)?;
        Ok((fields, joint))
    }

    /// Heads as tape variables (no spatial derivatives).
    pub fn heads_tape(&self, tape: &mut Tape, store: &ParamStore, input: &Mat) -> Vec<FieldHeads> {
        let x = tape.constant(input.clone());
        let out = self.mlp.forward(tape, store, x);
        let h = self.head_width();
        let n = input.nrows();
        (0..self.n_fields)
            .map(|f| {
                let c = f * h;
                let mu = tape.slice_cols(out, c, c + 1);
                let raw = tape.slice_cols(out, c + 1, c + 2);
                let lambda = tape.map(raw, ScalarFn::SigmaT(self.bounds), 0);
                let v = if self.rank > 0 {
                    tape.slice_cols(out, c + 2, c + h)
                } else {
                    tape.constant(Array2::zeros((n, 0)))
                };
                FieldHeads { mu, lambda, v }
            })
            .collect()
    }

    /// Heads with spatial jets with respect to the coordinate columns.
    pub fn heads_jet(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        input: &Mat,
        spec: &JetSpec,
    ) -> Result<Vec<FieldJets>> {
        let out = self.mlp.forward_jet(tape, store, input, spec)?;
        let h = self.head_width();
        Ok((0..self.n_fields)
            .map(|f| {
                let c = f * h;
                let mu = out.slice_cols(tape, c, c + 1);
                let raw = out.slice_cols(tape, c + 1, c + 2);
                let lambda = raw.map(tape, ScalarFn::SigmaT(self.bounds), spec);
                let v = (self.rank > 0).then(|| out.slice_cols(tape, c + 2, c + h));
                FieldJets { mu, lambda, v }
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::ProblemKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net(kind: ProblemKind, rank: usize) -> (ParamStore, AlphaNet, Problem) {
        let p = Problem::of_kind(kind);
        let mut store = ParamStore::new();
        let cfg = AlphaConfig { width: 16, depth: 2, rank, ..AlphaConfig::default() };
        let a = AlphaNet::new(&mut store, &p, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        (store, a, p)
    }

    #[test]
    fn diagonal_mode_has_empty_factor() {
        let (store, a, _) = net(ProblemKind::Poisson1d, 0);
        let pts = ndarray::array![[0.1], [0.5]];
        let (fields, joint) = a.predict(&store, &pts, &[0.1, 0.2, 0.3, 0.4], &[1.5]).unwrap();
        assert_eq!(fields[0].v.ncols(), 0);
        assert_eq!(joint.rank(), 0);
        assert!(joint.lambda.iter().all(|&l| (l - 1e-2).abs() < 0.5));
    }

    #[test]
    fn parameter_inputs_span_unit_interval() {
        let (_, a, _) = net(ProblemKind::Burgers, 0);
        let lo = a.input(&ndarray::array![[0.3, 0.7]], &[1e-2, 0.5], &[0.5]).unwrap();
        let hi = a.input(&ndarray::array![[0.3, 0.7]], &[1e-1, 1.0], &[2.0]).unwrap();
        assert_eq!(lo.row(0).to_vec()[..2], [0.3, 0.7]);
        for k in 2..5 {
            assert!((lo[[0, k]] + 1.0).abs() < 1e-12 && (hi[[0, k]] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn permuting_points_permutes_heads() {
        let (store, a, _) = net(ProblemKind::NsLid, 2);
        let pts = ndarray::array![[0.1, 0.2, 0.3], [0.9, 0.4, 0.6], [0.5, 0.5, 0.1]];
        let perm = [2, 0, 1];
        let permuted = pts.select(ndarray::Axis(0), &perm);
        let (f1, _) = a.predict(&store, &pts, &[0.9, 0.3], &[]).unwrap();
        let (f2, _) = a.predict(&store, &permuted, &[0.9, 0.3], &[]).unwrap();
        for (g1, g2) in f1.iter().zip(&f2) {
            for (i, &p) in perm.iter().enumerate() {
                assert_eq!(g2.mean[i], g1.mean[p]);
                assert_eq!(g2.lambda[i], g1.lambda[p]);
                assert_eq!(g2.v.row(i), g1.v.row(p));
            }
        }
    }

    #[test]
    fn lambda_within_bounds_and_stack_matches_blocks() {
        let (store, a, _) = net(ProblemKind::NsLid, 2);
        let pts = Array2::from_shape_fn((5, 3), |(i, k)| 0.1 + 0.15 * i as f64 + 0.05 * k as f64);
        let (fields, joint) = a.predict(&store, &pts, &[0.85, 0.5], &[]).unwrap();
        assert!(joint.lambda.iter().all(|&l| l > 1e-5 && l < 1.0));
        let k = joint.covariance_dense();
        for (fa, ga) in fields.iter().enumerate() {
            for (fb, gb) in fields.iter().enumerate() {
                let block = ga.v.dot(&gb.v.t());
                for i in 0..5 {
                    for j in 0..5 {
                        let diag = if fa == fb && i == j { ga.lambda[i] } else { 0.0 };
                        assert!((k[[fa * 5 + i, fb * 5 + j]] - block[[i, j]] - diag).abs() < 1e-14);
                    }
                }
            }
        }
    }

    #[test]
    fn wrong_parameter_length_is_shape_error() {
        let (store, a, _) = net(ProblemKind::Burgers, 0);
        let pts = ndarray::array![[0.1, 0.2]];
        assert!(matches!(a.predict(&store, &pts, &[0.05], &[1.0]), Err(Error::Shape(_))));
    }
}
