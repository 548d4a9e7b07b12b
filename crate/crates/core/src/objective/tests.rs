use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::elbo::gaussian_residual_term;
use super::*;
use crate::emulator::{AlphaConfig, GicConfig};
use crate::engine::{ExpLinearBounds, ParamGrads, Tape};
use crate::gauss::LOG_2PI;
use crate::pde::{ProblemConfig, ProblemKind};

fn tiny_model(kind: ProblemKind, rank: usize, elbo: &ElboConfig, seed: u64) -> Model {
    let cfg = ModelConfig {
        problem: ProblemConfig::new(kind),
        alpha: AlphaConfig { width: 8, depth: 2, rank, ..AlphaConfig::default() },
        beta: Some(GicConfig {
            channels: 3,
            lattice: Some(4),
            p_width: 8,
            p_depth: 1,
            conv_layers: 1,
            kernel: 3,
            head_width: 8,
            head_depth: 1,
            ..GicConfig::default()
        }),
    };
    Model::new(&cfg, elbo, seed).unwrap()
}

fn random_dataset(model: &Model, n: usize, points: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = &model.problem;
    let records = (0..n)
        .map(|_| {
            let x = crate::domain::sample_grid(&p.domain, points, p.grid, &mut rng).unwrap().points;
            Record {
                z: p.sample_z(&mut rng),
                w: p.sample_w(&mut rng),
                y: (0..points).map(|_| rng.random_range(-0.5..0.5)).collect(),
                x,
            }
        })
        .collect();
    Dataset { records, sigma_n: 0.05, seed }
}

/// Loss `-elbo` and its gradient for a fixed set of random numbers.
fn loss(model: &Model, cfg: &ElboConfig, ds: Option<&Dataset>, want: bool) -> (f64, Option<ParamGrads>) {
    let est = step_estimate(model, cfg, ds, 17, 3, 0, want).unwrap();
    (-est.terms.elbo(), est.grads)
}

fn check_gradient(mut model: Model, cfg: &ElboConfig, ds: Option<&Dataset>) {
    let (_, g) = loss(&model, cfg, ds, true);
    let g = g.unwrap();
    let total = model.store.numel();
    let picks: Vec<usize> = (0..50).map(|k| k * total / 50 + (k % 3)).filter(|&i| i < total).collect();
    let (mut num, mut den) = (0.0, 0.0);
    for &i in &picks {
        let x0 = model.store.flat_get(i);
        let h = 1e-5 * x0.abs().max(1.0);
        model.store.flat_set(i, x0 + h);
        let lp = loss(&model, cfg, ds, false).0;
        model.store.flat_set(i, x0 - h);
        let lm = loss(&model, cfg, ds, false).0;
        model.store.flat_set(i, x0);
        let fd = (lp - lm) / (2.0 * h);
        let ad = g.flat_get(i);
        num += (fd - ad) * (fd - ad);
        den += fd * fd;
    }
    let rel = (num / den).sqrt();
    assert!(rel <= 1e-4, "relative gradient error {rel:e}");
}

#[test]
fn physics_gradient_matches_finite_differences() {
    let cfg = ElboConfig { n_mc: 2, n_collocation: Some(6), ..ElboConfig::default() };
    check_gradient(tiny_model(ProblemKind::Poisson1d, 0, &cfg, 1), &cfg, None);
}

#[test]
fn burgers_gradient_with_learned_noise_and_low_rank() {
    let cfg = ElboConfig { n_mc: 2, n_collocation: Some(6), ..ElboConfig::default() };
    let model = tiny_model(ProblemKind::Burgers, 2, &cfg, 2);
    assert!(matches!(model.noise, ResidualNoise::Learned { .. }));
    check_gradient(model, &cfg, None);
}

#[test]
fn cavity_gradient_with_low_rank() {
    let cfg = ElboConfig { n_mc: 1, n_collocation: Some(5), ..ElboConfig::default() };
    check_gradient(tiny_model(ProblemKind::NsLid, 1, &cfg, 3), &cfg, None);
}

#[test]
fn physics_data_gradient_matches_finite_differences() {
    let cfg = ElboConfig {
        mode: ElboMode::PhysicsData,
        n_mc: 1,
        n_collocation: Some(6),
        batch_size: 2,
        ..ElboConfig::default()
    };
    let model = tiny_model(ProblemKind::Poisson1d, 1, &cfg, 4);
    let ds = random_dataset(&model, 4, 5, 8);
    check_gradient(model, &cfg, Some(&ds));
}

#[test]
fn indirect_gradient_matches_finite_differences() {
    let mut cfg = ElboConfig {
        mode: ElboMode::Indirect,
        n_mc: 1,
        n_collocation: Some(6),
        batch_size: 2,
        ..ElboConfig::default()
    };
    cfg.indirect = IndirectConfig {
        observation: Observation::PointwiseSquare,
        eps_y: 0.1,
        eps_z: 0.01,
        eps_w: 0.01,
        eps_x: 0.01,
        inner_samples: 2,
    };
    let model = tiny_model(ProblemKind::Burgers, 1, &cfg, 5);
    let ds = random_dataset(&model, 3, 4, 9);
    check_gradient(model, &cfg, Some(&ds));
}

#[test]
fn zero_residuals_give_plug_in_value() {
    let mut tape = Tape::new();
    let r = tape.constant(Array2::zeros((7, 1)));
    let eps = tape.constant_scalar(1e-2);
    let t = gaussian_residual_term(&mut tape, r, eps);
    let expect = 7.0 * (-0.5 * (2.0 * std::f64::consts::PI * 1e-4).ln());
    assert!((tape.scalar(t) - expect).abs() < 1e-12);
}

#[test]
fn permuting_the_grid_is_bit_identical() {
    let cfg = ElboConfig { n_mc: 1, n_collocation: Some(9), ..ElboConfig::default() };
    let model = tiny_model(ProblemKind::Burgers, 1, &cfg, 6);
    let draws = step_draws(&model, &cfg, 3, 0, 0).unwrap();
    let d = &draws[0];
    let perm = [4, 1, 8, 0, 7, 2, 6, 3, 5];
    let shuffled = PhysicsDraw {
        points: d.points.select(ndarray::Axis(0), &perm),
        eps1: d.eps1.select(ndarray::Axis(0), &perm),
        ..d.clone()
    };
    let (a, ga) = physics_estimate(&model, &cfg, std::slice::from_ref(d), true).unwrap();
    let (b, gb) = physics_estimate(&model, &cfg, &[shuffled], true).unwrap();
    assert_eq!(a, b);
    assert_eq!(ga, gb);
}

#[test]
fn huge_residual_noise_flattens_the_residual_gradient() {
    let cfg = ElboConfig { n_mc: 1, n_collocation: Some(8), eps_r: Some(1e6), ..ElboConfig::default() };
    let model = tiny_model(ProblemKind::Poisson1d, 0, &cfg, 7);
    let draws = step_draws(&model, &cfg, 1, 0, 0).unwrap();
    let grad_norm = |model: &Model| {
        let mut tape = Tape::new();
        let s = physics_sample_tape(&mut tape, model, &cfg, &draws[0]).unwrap();
        let adj = tape.backward(s.residual);
        tape.param_grads(&adj, &model.store).norm()
    };
    let flat = grad_norm(&model);
    let cfg_sharp = ElboConfig { eps_r: Some(1e-2), ..cfg.clone() };
    let sharp = grad_norm(&tiny_model(ProblemKind::Poisson1d, 0, &cfg_sharp, 7));
    assert!(flat < 1e-9, "{flat:e}");
    assert!(sharp > 1.0);
}

#[test]
fn estimator_error_shrinks_like_inverse_root_n() {
    let base = ElboConfig { n_collocation: Some(8), ..ElboConfig::default() };
    let model = tiny_model(ProblemKind::Poisson1d, 0, &base, 8);
    let spread = |n: usize| {
        let cfg = ElboConfig { n_mc: n, ..base.clone() };
        let vals: Vec<f64> = (0..100)
            .map(|rep| step_estimate(&model, &cfg, None, 1000 + rep, 0, 0, false).unwrap().terms.elbo())
            .collect();
        let m = vals.iter().sum::<f64>() / 100.0;
        (vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / 99.0).sqrt()
    };
    let (s4, s16, s64) = (spread(4), spread(16), spread(64));
    for (ratio, name) in [(s4 / s16, "4/16"), (s16 / s64, "16/64")] {
        assert!(ratio > 1.4 && ratio < 2.8, "spread ratio {name} = {ratio}");
    }
}

#[test]
fn exhaustive_batches_reproduce_full_sum() {
    let cfg = ElboConfig::default();
    let model = tiny_model(ProblemKind::Poisson1d, 1, &cfg, 9);
    let ds = random_dataset(&model, 4, 6, 10);
    let all: Vec<usize> = (0..4).collect();
    let (full, _) = data_estimate(&model, &ds, &all, false).unwrap();
    let mut acc = 0.0;
    let mut count = 0;
    for i in 0..4 {
        for j in i + 1..4 {
            acc += data_estimate(&model, &ds, &[i, j], false).unwrap().0;
            count += 1;
        }
    }
    assert_eq!(count, 6);
    let avg = acc / 6.0;
    assert!((avg - full).abs() <= 8.0 * f64::EPSILON * full.abs(), "{avg} vs {full}");
}

#[test]
fn exact_observations_with_vanishing_covariance() {
    let cfg = ElboConfig::default();
    let mut model = tiny_model(ProblemKind::Poisson1d, 0, &cfg, 11);
    // squash the forward variance to its lower bound
    model.alpha.bounds = ExpLinearBounds { lo: 1e-14, hi: 1.0 };
    let bias = model.alpha.mlp.output_bias();
    model.store.get_mut(bias)[[0, 1]] = -60.0;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = crate::domain::sample_grid(&model.problem.domain, 12, model.problem.grid, &mut rng).unwrap().points;
    let (z, w) = (model.problem.sample_z(&mut rng), model.problem.sample_w(&mut rng));
    let (mean, _) = crate::evalcli::predict_forward(&model, &x, &z, &w).unwrap();
    let rec = Record { z, w, x, y: mean.column(0).to_vec() };
    let sigma_n = 0.05;
    let mut tape = Tape::new();
    let lp = data_record_tape(&mut tape, &model, &rec, sigma_n).unwrap();
    let expect = 12.0 * -0.5 * (LOG_2PI + (sigma_n * sigma_n).ln());
    assert!((tape.scalar(lp) - expect).abs() < 1e-6, "{} vs {expect}", tape.scalar(lp));
}

#[test]
fn flat_indirect_likelihood_has_no_gradient() {
    let mut cfg = ElboConfig { mode: ElboMode::Indirect, batch_size: 2, ..ElboConfig::default() };
    cfg.indirect.eps_y = 1e8;
    let model = tiny_model(ProblemKind::Poisson1d, 1, &cfg, 12);
    let ds = random_dataset(&model, 2, 5, 13);
    let (_, g) = indirect_estimate(&model, &cfg, &ds, &[0, 1], 1, &[0], true).unwrap();
    assert!(g.unwrap().norm() < 1e-12);
}

#[test]
fn mean_observation_peaks_at_field_mean() {
    let mut cfg = ElboConfig { mode: ElboMode::Indirect, ..ElboConfig::default() };
    cfg.indirect = IndirectConfig { observation: Observation::MeanOfField, eps_y: 0.1, ..IndirectConfig::default() };
    let mut model = tiny_model(ProblemKind::Poisson1d, 0, &cfg, 14);
    model.alpha.bounds = ExpLinearBounds { lo: 1e-14, hi: 1.0 };
    let bias = model.alpha.mlp.output_bias();
    model.store.get_mut(bias)[[0, 1]] = -60.0;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = crate::domain::sample_grid(&model.problem.domain, 10, model.problem.grid, &mut rng).unwrap().points;
    let (z, w) = (model.problem.sample_z(&mut rng), model.problem.sample_w(&mut rng));
    let (mean, _) = crate::evalcli::predict_forward(&model, &x, &z, &w).unwrap();
    let c = mean.column(0).sum() / 10.0;
    let ll = |y: f64| {
        let rec = Record { z: z.clone(), w: w.clone(), x: x.clone(), y: vec![y] };
        let mut tape = Tape::new();
        let v = indirect_record_tape(&mut tape, &model, &rec, &cfg.indirect, &mut ChaCha8Rng::seed_from_u64(0));
        tape.scalar(v.unwrap())
    };
    let peak = ll(c);
    for dy in [-0.2, -0.01, 0.01, 0.2] {
        assert!(ll(c + dy) < peak);
    }
    assert_eq!(Observation::MeanOfField.apply(&[2.5; 4]), vec![2.5]);
}

#[test]
fn indirect_identity_matches_closed_form() {
    let mut cfg = ElboConfig { mode: ElboMode::Indirect, ..ElboConfig::default() };
    cfg.indirect = IndirectConfig { eps_y: 0.3, inner_samples: 200, ..IndirectConfig::default() };
    let model = tiny_model(ProblemKind::Poisson1d, 2, &cfg, 15);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = crate::domain::sample_grid(&model.problem.domain, 6, model.problem.grid, &mut rng).unwrap().points;
    let (z, w) = (model.problem.sample_z(&mut rng), model.problem.sample_w(&mut rng));
    let y: Vec<f64> = (0..6).map(|_| rng.sample::<f64, _>(StandardNormal) * 0.3).collect();
    let rec = Record { z: z.clone(), w: w.clone(), x: x.clone(), y: y.clone() };
    let closed = super::elbo::indirect_identity_closed_form(&model, &rec, cfg.indirect.eps_y).unwrap();
    let reps: Vec<f64> = (0..20)
        .map(|k| {
            let mut tape = Tape::new();
            let v = indirect_record_tape(&mut tape, &model, &rec, &cfg.indirect, &mut ChaCha8Rng::seed_from_u64(k));
            tape.scalar(v.unwrap())
        })
        .collect();
    let m = reps.iter().sum::<f64>() / 20.0;
    let se = (reps.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / 19.0).sqrt() / 20f64.sqrt();
    assert!((m - closed).abs() <= 3.0 * se, "mc {m} closed {closed} se {se}");
}

#[test]
fn smoke_training_improves_elbo() {
    let mut improved = 0;
    for seed in 0..10 {
        let model_cfg = ModelConfig {
            problem: ProblemConfig::new(ProblemKind::Poisson1d),
            alpha: AlphaConfig { width: 16, depth: 2, ..AlphaConfig::default() },
            beta: Some(GicConfig { channels: 4, p_width: 16, head_width: 16, ..GicConfig::default() }),
        };
        let elbo = ElboConfig { n_mc: 4, n_collocation: Some(16), ..ElboConfig::default() };
        let train = TrainConfig { steps: 50, lr: 3e-3, ..TrainConfig::default() };
        let mut t = Trainer::new(&model_cfg, &elbo, &train, seed, None).unwrap();
        let first = t.step().unwrap().terms.elbo();
        let mut last = first;
        while t.step_count() < 50 {
            last = t.step().unwrap().terms.elbo();
        }
        if last > first {
            improved += 1;
        }
    }
    assert!(improved >= 8, "improved on {improved}/10 seeds");
}

#[test]
fn divergence_is_reported_after_retries() {
    let cfg = ElboConfig { n_mc: 1, n_collocation: Some(4), ..ElboConfig::default() };
    let model_cfg = ModelConfig {
        problem: ProblemConfig::new(ProblemKind::Poisson1d),
        alpha: AlphaConfig { width: 4, depth: 1, ..AlphaConfig::default() },
        beta: None,
    };
    let mut t = Trainer::new(&model_cfg, &cfg, &TrainConfig::default(), 0, None).unwrap();
    let id = t.model.alpha.mlp.output_bias();
    t.model.store.get_mut(id)[[0, 0]] = f64::NAN;
    match t.step() {
        Err(crate::Error::Divergence { step: 0, .. }) => {}
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn config_rejects_bad_values_and_unknown_keys() {
    let p = crate::pde::Problem::of_kind(ProblemKind::Poisson1d);
    assert!(ElboConfig { n_mc: 0, ..ElboConfig::default() }.validate(&p).is_err());
    assert!(ElboConfig { eps_r: Some(-1.0), ..ElboConfig::default() }.validate(&p).is_err());
    assert!(toml::from_str::<ElboConfig>("n_mcc = 3").is_err());
    let c: ElboConfig = toml::from_str("mode = \"physics-data\"\nbatch_size = 25").unwrap();
    assert_eq!(c.mode, ElboMode::PhysicsData);
    assert_eq!(c.batch_size, 25);
}
