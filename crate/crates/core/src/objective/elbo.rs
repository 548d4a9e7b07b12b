//! Monte-Carlo estimators of the evidence lower bound and their gradients.
//!
//! Every sample and every data record is recorded on its own tape. Results
//! are reduced in index order, so parallel and sequential runs agree bit for
//! bit.

use ndarray::{Axis, Array2};
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::domain::sample_grid;
use crate::emulator::{canonical_order, diag_logpdf_tape};
use crate::engine::{Mat, ParamGrads, ScalarFn, Tape, TapeJet, Var};
use crate::error::{Error, Result};
use crate::gauss::{lr_logpdf_tape, LOG_2PI};
use crate::parallel::map_ordered;
use crate::pde::Problem;
use crate::rng::{stream, TAG_BATCH, TAG_PHYSICS, TAG_RECORD};

use super::config::{ElboConfig, ElboMode, IndirectConfig, Observation};
use super::dataset::{Dataset, Record};
use super::model::Model;
use super::residual_op::residual_tape;

/// Random inputs of one physics sample: grid, parameters and frozen noise.
#[derive(Clone, Debug, PartialEq)]
pub struct PhysicsDraw {
    pub points: Mat,
    pub z: Vec<f64>,
    pub w: Vec<f64>,
    /// Per-point noise of the diagonal part, `n x F`.
    pub eps1: Mat,
    /// Noise of the low-rank part, shared by all points and fields.
    pub eps2: Vec<f64>,
}

impl PhysicsDraw {
    pub fn sample<R: Rng + ?Sized>(problem: &Problem, n: usize, rank: usize, rng: &mut R) -> Result<Self> {
        let grid = sample_grid(&problem.domain, n, problem.grid, rng)?;
        let z = problem.sample_z(rng);
        let w = problem.sample_w(rng);
        let eps1 = Array2::from_shape_fn((n, problem.n_fields()), |_| rng.sample(StandardNormal));
        let eps2 = (0..rank).map(|_| rng.sample(StandardNormal)).collect();
        Ok(Self { points: grid.points, z, w, eps1, eps2 })
    }

    /// Rows sorted by point coordinates (then noise).
    pub fn canonical(&self) -> Self {
        let order = canonical_order(&self.points, &self.eps1);
        Self {
            points: self.points.select(Axis(0), &order),
            eps1: self.eps1.select(Axis(0), &order),
            ..self.clone()
        }
    }
}

/// ELBO components. `data` is zero in physics-only mode.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Terms {
    pub residual: f64,
    pub beta: f64,
    pub prior: f64,
    pub entropy: f64,
    pub data: f64,
}

impl Terms {
    pub fn elbo(&self) -> f64 {
        self.residual + self.beta + self.prior + self.entropy + self.data
    }

    pub fn is_finite(&self) -> bool {
        [self.residual, self.beta, self.prior, self.entropy, self.data].iter().all(|x| x.is_finite())
    }

    fn describe(&self) -> String {
        format!(
            "residual={:e} beta={:e} prior={:e} entropy={:e} data={:e}",
            self.residual, self.beta, self.prior, self.entropy, self.data
        )
    }
}

/// An ELBO estimate with the gradient of the loss `-elbo`.
#[derive(Clone, Debug)]
pub struct Estimate {
    pub terms: Terms,
    pub grads: Option<ParamGrads>,
}

/// Tape variables (`1 x 1`) of one physics sample.
#[derive(Clone, Copy, Debug)]
pub struct SampleVars {
    pub residual: Var,
    pub beta: Var,
    pub prior: Var,
    pub entropy: Var,
}

impl SampleVars {
    pub fn total(&self, tape: &mut Tape) -> Var {
        let a = tape.add(self.residual, self.beta);
        let b = tape.add(self.prior, self.entropy);
        tape.add(a, b)
    }
}

fn column(values: Vec<f64>) -> Mat {
    let n = values.len();
    Array2::from_shape_vec((n, 1), values).expect("column")
}

/// Sum of `log N(r; 0, eps^2)` over every entry of `r`.
pub(crate) fn gaussian_residual_term(tape: &mut Tape, r: Var, eps: Var) -> Var {
    let (n, m) = tape.shape(r);
    let count = (n * m) as f64;
    let sq = tape.square(r);
    let ss = tape.sum(sq);
    let e2 = tape.square(eps);
    let inv = tape.map(e2, ScalarFn::Recip, 0);
    let quad = tape.mul(ss, inv);
    let quad = tape.scale(quad, -0.5);
    let loge = tape.map(eps, ScalarFn::Log, 0);
    let loge = tape.scale(loge, -count);
    let t = tape.add(quad, loge);
    tape.offset_scalar(t, -0.5 * count * LOG_2PI)
}

/// Records one physics sample: pathwise field sample with spatial jets,
/// residual likelihood, inverse-network term, field prior and entropy.
pub fn physics_sample_tape(
    tape: &mut Tape,
    model: &Model,
    cfg: &ElboConfig,
    draw: &PhysicsDraw,
) -> Result<SampleVars> {
    let d = draw.canonical();
    let p = &model.problem;
    let spec = p.jet_spec();
    let n = d.points.nrows();
    let nf = p.n_fields();
    let rank = model.alpha.rank;
    if d.eps1.dim() != (n, nf) || d.eps2.len() != rank {
        return Err(Error::Shape("physics draw noise does not match the network".into()));
    }
    let input = model.alpha.input(&d.points, &d.z, &d.w)?;
    let heads = model.alpha.heads_jet(tape, &model.store, &input, &spec)?;
    let e2 = (rank > 0)
        .then(|| tape.constant(Array2::from_shape_vec((rank, 1), d.eps2.clone()).expect("column")));

    let mut parts = Vec::with_capacity(nf);
    let (mut mus, mut lams, mut vs) = (Vec::new(), Vec::new(), Vec::new());
    for (f, h) in heads.iter().enumerate() {
        let sd = h.lambda.map(tape, ScalarFn::Sqrt, &spec);
        let e1 = tape.constant(d.eps1.column(f).to_owned().insert_axis(Axis(1)));
        let noise = sd.mul_const(tape, e1);
        let mut u = h.mu.add(tape, &noise);
        if let (Some(v), Some(e2)) = (&h.v, e2) {
            let low = v.matmul_const(tape, e2);
            u = u.add(tape, &low);
            vs.push(v.value);
        }
        parts.push(u);
        mus.push(h.mu.value);
        lams.push(h.lambda.value);
    }
    let u = TapeJet::concat_cols(tape, &parts);

    let r = residual_tape(tape, p, &spec, &d.points, &d.z, &d.w, &u)?;
    let eps = model.eps_r_tape(tape);
    let residual = gaussian_residual_term(tape, r, eps);

    let (b, dd) = model.lift_values(&d.points, &d.w);
    let raw = if cfg.beta_grad_to_alpha { u.value } else { tape.detach(u.value) };
    let dv = tape.constant(dd);
    let lifted = tape.mul(raw, dv);
    let lifted = tape.offset(lifted, &b);
    let (bm, bv) = model.beta.forward_tape(tape, &model.store, lifted, &d.points, &d.w)?;
    let beta = diag_logpdf_tape(tape, &d.z, bm, bv);

    let m = (n * nf) as f64;
    let s2 = cfg.sigma_u * cfg.sigma_u;
    let usq = tape.square(u.value);
    let us = tape.sum(usq);
    let prior = tape.scale(us, -0.5 / s2);
    let prior = tape.offset_scalar(prior, -0.5 * m * (LOG_2PI + s2.ln()));

    // point-major stacking of the fields
    let ucol = tape.reshape(u.value, n * nf, 1);
    let mu = tape.concat_cols(&mus);
    let mu = tape.reshape(mu, n * nf, 1);
    let lam = tape.concat_cols(&lams);
    let lam = tape.reshape(lam, n * nf, 1);
    let v = if rank > 0 {
        let v = tape.concat_cols(&vs);
        tape.reshape(v, n * nf, rank)
    } else {
        tape.constant(Array2::zeros((n * nf, 0)))
    };
    let logq = lr_logpdf_tape(tape, ucol, mu, lam, v)?;
    let entropy = tape.scale(logq, -1.0);
    Ok(SampleVars { residual, beta, prior, entropy })
}

/// Reduces per-item `(terms, grads)` in index order.
fn reduce(items: Vec<Result<(Terms, Option<ParamGrads>)>>) -> Result<(Terms, Option<ParamGrads>)> {
    let mut total = Terms::default();
    let mut grads: Option<ParamGrads> = None;
    for item in items {
        let (t, g) = item?;
        total.residual += t.residual;
        total.beta += t.beta;
        total.prior += t.prior;
        total.entropy += t.entropy;
        total.data += t.data;
        if let Some(g) = g {
            match grads.as_mut() {
                Some(acc) => acc.accumulate(&g),
                None => grads = Some(g),
            }
        }
    }
    Ok((total, grads))
}

/// Physics ELBO averaged over `draws`; gradients are of `-elbo`.
pub fn physics_estimate(
    model: &Model,
    cfg: &ElboConfig,
    draws: &[PhysicsDraw],
    want_grads: bool,
) -> Result<(Terms, Option<ParamGrads>)> {
    if draws.is_empty() {
        return Err(Error::Config("at least one Monte-Carlo sample is required".into()));
    }
    let weight = 1.0 / draws.len() as f64;
    let items = map_ordered(draws, |draw| {
        let mut tape = Tape::new();
        let s = physics_sample_tape(&mut tape, model, cfg, draw)?;
        let total = s.total(&mut tape);
        let terms = Terms {
            residual: weight * tape.scalar(s.residual),
            beta: weight * tape.scalar(s.beta),
            prior: weight * tape.scalar(s.prior),
            entropy: weight * tape.scalar(s.entropy),
            data: 0.0,
        };
        let grads = want_grads.then(|| {
            let adj = tape.backward_with(total, Mat::from_elem((1, 1), -weight));
            tape.param_grads(&adj, &model.store)
        });
        Ok((terms, grads))
    });
    reduce(items)
}

/// `log N(y; B + D mu, D^2 Lambda + sigma_n^2 I + (D V)(D V)^T)` for one record.
pub fn data_record_tape(tape: &mut Tape, model: &Model, rec: &Record, sigma_n: f64) -> Result<Var> {
    if model.problem.n_fields() != 1 {
        return Err(Error::Config("data likelihood supports single-field problems".into()));
    }
    if rec.y.len() != rec.x.nrows() {
        return Err(Error::Shape("record observations and points differ in length".into()));
    }
    let input = model.alpha.input(&rec.x, &rec.z, &rec.w)?;
    let heads = model.alpha.heads_tape(tape, &model.store, &input);
    let h = &heads[0];
    let (b, d) = model.lift_values(&rec.x, &rec.w);
    let dc = tape.constant(d.clone());
    let mean = tape.mul(h.mu, dc);
    let mean = tape.offset(mean, &b);
    let d2 = tape.constant(d.mapv(|x| x * x));
    let lam = tape.mul(h.lambda, d2);
    let lam = tape.offset_scalar(lam, sigma_n * sigma_n);
    let v = tape.mul_col(h.v, dc);
    let y = tape.constant(column(rec.y.clone()));
    lr_logpdf_tape(tape, y, mean, lam, v)
}

/// Scaled mini-batch data term `(N_D / |M|) sum_{i in M} log p(y_i)`.
pub fn data_estimate(
    model: &Model,
    dataset: &Dataset,
    batch: &[usize],
    want_grads: bool,
) -> Result<(f64, Option<ParamGrads>)> {
    let scale = dataset.len() as f64 / batch.len() as f64;
    let items = map_ordered(batch, |&i| {
        let mut tape = Tape::new();
        let lp = data_record_tape(&mut tape, model, &dataset.records[i], dataset.sigma_n)?;
        let terms = Terms { data: tape.scalar(lp), ..Terms::default() };
        let grads = want_grads.then(|| {
            let adj = tape.backward_with(lp, Mat::from_elem((1, 1), -scale));
            tape.param_grads(&adj, &model.store)
        });
        Ok((terms, grads))
    });
    let (t, g) = reduce(items)?;
    Ok((scale * t.data, g))
}

/// Inner Monte-Carlo average of `log N(y; g(u~), eps_y^2 I)` for one record,
/// with `u~` drawn from the lifted forward emulator at perturbed inputs.
pub fn indirect_record_tape<R: Rng + ?Sized>(
    tape: &mut Tape,
    model: &Model,
    rec: &Record,
    ind: &IndirectConfig,
    rng: &mut R,
) -> Result<Var> {
    if model.problem.n_fields() != 1 {
        return Err(Error::Config("indirect likelihood supports single-field problems".into()));
    }
    let n = rec.x.nrows();
    if rec.y.len() != ind.observation.len(n) {
        return Err(Error::Shape("record observation length does not match g".into()));
    }
    let rank = model.alpha.rank;
    let mut normal = |s: f64| s * rng.sample::<f64, _>(StandardNormal);
    let mut acc: Option<Var> = None;
    let y = tape.constant(column(rec.y.clone()));
    let m = rec.y.len() as f64;
    let ey2 = ind.eps_y * ind.eps_y;
    for _ in 0..ind.inner_samples {
        let z: Vec<f64> = rec.z.iter().map(|&v| v + normal(ind.eps_z)).collect();
        let w: Vec<f64> = rec.w.iter().map(|&v| v + normal(ind.eps_w)).collect();
        let x = rec.x.mapv(|v| v + normal(ind.eps_x));
        let e1: Vec<f64> = (0..n).map(|_| normal(1.0)).collect();
        let e2: Vec<f64> = (0..rank).map(|_| normal(1.0)).collect();

        let input = model.alpha.input(&x, &z, &w)?;
        let heads = model.alpha.heads_tape(tape, &model.store, &input);
        let h = &heads[0];
        let sd = tape.map(h.lambda, ScalarFn::Sqrt, 0);
        let e1 = tape.constant(column(e1));
        let noise = tape.mul(sd, e1);
        let mut u = tape.add(h.mu, noise);
        if rank > 0 {
            let e2 = tape.constant(column(e2));
            let low = tape.matmul(h.v, e2);
            u = tape.add(u, low);
        }
        let (b, d) = model.lift_values(&x, &w);
        let dc = tape.constant(d);
        let u = tape.mul(u, dc);
        let u = tape.offset(u, &b);
        let g = match ind.observation {
            Observation::Identity => u,
            Observation::MeanOfField => {
                let s = tape.sum(u);
                tape.scale(s, 1.0 / n as f64)
            }
            Observation::PointwiseSquare => tape.square(u),
        };
        let diff = tape.sub(y, g);
        let sq = tape.square(diff);
        let ss = tape.sum(sq);
        let ll = tape.scale(ss, -0.5 / ey2);
        let ll = tape.offset_scalar(ll, -0.5 * m * (LOG_2PI + ey2.ln()));
        acc = Some(match acc {
            Some(a) => tape.add(a, ll),
            None => ll,
        });
    }
    let total = acc.expect("at least one inner sample");
    Ok(tape.scale(total, 1.0 / ind.inner_samples as f64))
}

/// Scaled mini-batch indirect data term. Record `i` draws its inner noise
/// from `stream(seed, path ++ [i])`.
pub fn indirect_estimate(
    model: &Model,
    cfg: &ElboConfig,
    dataset: &Dataset,
    batch: &[usize],
    seed: u64,
    path: &[u64],
    want_grads: bool,
) -> Result<(f64, Option<ParamGrads>)> {
    let scale = dataset.len() as f64 / batch.len() as f64;
    let items = map_ordered(batch, |&i| {
        let mut full = path.to_vec();
        full.push(i as u64);
        let mut rng = stream(seed, &full);
        let mut tape = Tape::new();
        let lp = indirect_record_tape(&mut tape, model, &dataset.records[i], &cfg.indirect, &mut rng)?;
        let terms = Terms { data: tape.scalar(lp), ..Terms::default() };
        let grads = want_grads.then(|| {
            let adj = tape.backward_with(lp, Mat::from_elem((1, 1), -scale));
            tape.param_grads(&adj, &model.store)
        });
        Ok((terms, grads))
    });
    let (t, g) = reduce(items)?;
    Ok((scale * t.data, g))
}

/// Physics draws of step `step`, attempt `attempt`.
pub fn step_draws(model: &Model, cfg: &ElboConfig, seed: u64, step: u64, attempt: u64) -> Result<Vec<PhysicsDraw>> {
    let n = cfg.collocation(&model.problem);
    (0..cfg.n_mc as u64)
        .map(|s| {
            let mut rng = stream(seed, &[TAG_PHYSICS, step, attempt, s]);
            PhysicsDraw::sample(&model.problem, n, model.alpha.rank, &mut rng)
        })
        .collect()
}

/// Sorted mini-batch of `size` distinct record indices.
pub fn step_batch(n_records: usize, size: usize, seed: u64, step: u64, attempt: u64) -> Result<Vec<usize>> {
    if size == 0 || size > n_records {
        return Err(Error::Config(format!(
            "batch size {size} must be between 1 and the dataset size {n_records}"
        )));
    }
    let mut rng = stream(seed, &[TAG_BATCH, step, attempt]);
    let mut idx = index::sample(&mut rng, n_records, size).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

/// Full estimate of the configured ELBO for one optimizer step.
pub fn step_estimate(
    model: &Model,
    cfg: &ElboConfig,
    dataset: Option<&Dataset>,
    seed: u64,
    step: u64,
    attempt: u64,
    want_grads: bool,
) -> Result<Estimate> {
    let draws = step_draws(model, cfg, seed, step, attempt)?;
    let (mut terms, mut grads) = physics_estimate(model, cfg, &draws, want_grads)?;
    if cfg.mode != ElboMode::Physics {
        let ds = dataset.ok_or_else(|| Error::Config("data mode requires a dataset".into()))?;
        let batch = step_batch(ds.len(), cfg.batch_size, seed, step, attempt)?;
        let (data, g) = if cfg.mode == ElboMode::PhysicsData {
            data_estimate(model, ds, &batch, want_grads)?
        } else {
            indirect_estimate(model, cfg, ds, &batch, seed, &[TAG_RECORD, step, attempt], want_grads)?
        };
        terms.data = data;
        if let (Some(acc), Some(g)) = (grads.as_mut(), g) {
            acc.accumulate(&g);
        }
    }
    if !terms.is_finite() || grads.as_ref().is_some_and(|g| !g.is_finite()) {
        return Err(Error::Divergence { step: step as usize, detail: terms.describe() });
    }
    Ok(Estimate { terms, grads })
}

/// Closed form of the identity-observation likelihood expectation without
/// input noise: `log N(y; m, eps_y^2 I) - tr(K) / (2 eps_y^2)` for the lifted
/// forward Gaussian `(m, K)` at the record inputs.
pub fn indirect_identity_closed_form(model: &Model, rec: &Record, eps_y: f64) -> Result<f64> {
    let (fields, _) = model.alpha.predict(&model.store, &rec.x, &rec.z, &rec.w)?;
    let g = &fields[0];
    let (b, d) = model.lift_values(&rec.x, &rec.w);
    let n = rec.x.nrows();
    let s = g.marginal_std();
    let e2 = eps_y * eps_y;
    let mut quad = 0.0;
    let mut trace = 0.0;
    for i in 0..n {
        let m = b[[i, 0]] + d[[i, 0]] * g.mean[i];
        quad += (rec.y[i] - m) * (rec.y[i] - m);
        trace += d[[i, 0]] * d[[i, 0]] * s[i] * s[i];
    }
    Ok(-0.5 * n as f64 * (LOG_2PI + e2.ln()) - 0.5 * quad / e2 - 0.5 * trace / e2)
}
