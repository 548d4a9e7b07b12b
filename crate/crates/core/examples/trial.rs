//! Desk-scale training run with progress output and a final evaluation.
//!
//! `cargo run --release --example trial -- [poisson|burgers] [steps] [lambda_init]`;
//! environment: `LR`, `GAMMA` (schedule), `DETACH` (stop beta gradients into alpha),
//! `SAVE` (directory for the final checkpoint and per-draw evaluation CSV).

use std::time::Instant;

use rgnp::emulator::AlphaConfig;
use rgnp::evalcli::{evaluate, held_out_residual, Checkpoint, EvalOptions};
use rgnp::objective::{ElboConfig, ModelConfig, TrainConfig, Trainer};
use rgnp::pde::{ProblemConfig, ProblemKind};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let kind = if args.get(1).map(String::as_str) == Some("burgers") {
        ProblemKind::Burgers
    } else {
        ProblemKind::Poisson1d
    };
    let steps: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(5000);
    let lambda_init: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1e-2);
    let (n_mc, coll) = if kind == ProblemKind::Burgers { (8, 225) } else { (16, 30) };
    let model = ModelConfig {
        problem: ProblemConfig::new(kind),
        alpha: AlphaConfig { width: 128, depth: 4, lambda_init, ..AlphaConfig::default() },
        beta: None,
    };
    let env = |k: &str| std::env::var(k).ok();
    let elbo = ElboConfig {
        n_mc,
        n_collocation: Some(coll),
        beta_grad_to_alpha: env("DETACH").is_none(),
        ..ElboConfig::default()
    };
    let lr = env("LR").and_then(|s| s.parse().ok()).unwrap_or(1e-3);
    let lr_gamma = env("GAMMA").and_then(|s| s.parse().ok()).unwrap_or(0.9);
    let train = TrainConfig { steps, lr, lr_gamma, ..TrainConfig::default() };
    let mut t = Trainer::new(&model, &elbo, &train, 1, None).unwrap();
    let start = Instant::now();
    let every = (steps / 20).max(1);
    while t.step_count() < steps {
        let m = t.step().unwrap();
        if m.step == 100 {
            let r = held_out_residual(&t.model, 10, coll, 99).unwrap();
            println!("heldout residual at 100: {r:e}");
        }
        if m.step.is_multiple_of(every) {
            println!("{} t={:.0}s", m.csv_row(), start.elapsed().as_secs_f64());
        }
    }
    let r = held_out_residual(&t.model, 10, coll, 99).unwrap();
    println!("heldout residual final: {r:e}");
    let z_range = (kind == ProblemKind::Burgers).then(|| vec![(5e-2, 1e-1), (0.5, 1.0)]);
    let n_test = if kind == ProblemKind::Burgers { 25 } else { 100 };
    let rep = evaluate(&t.model, &EvalOptions { n_test, seed: 5, z_range, inverse_points: coll }).unwrap();
    rep.write_summary_csv(std::io::stdout()).unwrap();
    if let Some(dir) = env("SAVE") {
        let dir = std::path::Path::new(&dir);
        std::fs::create_dir_all(dir).unwrap();
        Checkpoint::from_trainer(&t).save(&dir.join("checkpoint.rgnp")).unwrap();
        rep.write_samples_csv(std::fs::File::create(dir.join("eval_samples.csv")).unwrap()).unwrap();
    }
}
