//! Command-line behaviour: determinism, exit codes, golden evaluation.

use std::path::{Path, PathBuf};
use std::process::Command;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn rgnp() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rgnp"))
}

fn run(args: &[&str]) -> i32 {
    rgnp_cli::run(std::iter::once("rgnp").chain(args.iter().copied()))
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut rdr = csv::Reader::from_path(path).expect("csv");
    let head = rdr.headers().expect("header").iter().map(str::to_string).collect();
    let rows = rdr
        .records()
        .map(|r| {
            r.expect("record")
                .iter()
                .map(|f| f.parse::<f64>().unwrap_or(f64::NAN))
                .collect()
        })
        .collect();
    (head, rows)
}

#[test]
fn train_twice_gives_identical_checkpoints() {
    let cfg = data("tiny_poisson.toml");
    let cfg = cfg.to_str().unwrap();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let code = run(&["train", "--config", cfg, "--seed", "7", "--out-dir", d.path().to_str().unwrap()]);
        assert_eq!(code, 0);
    }
    let a = std::fs::read(dirs[0].path().join("checkpoint.rgnp")).unwrap();
    let b = std::fs::read(dirs[1].path().join("checkpoint.rgnp")).unwrap();
    assert_eq!(a, b);
    let metrics = std::fs::read_to_string(dirs[0].path().join("metrics.csv")).unwrap();
    assert!(metrics.starts_with(rgnp::objective::METRICS_HEADER));
    assert_eq!(metrics.lines().count(), 16);
}

#[test]
fn unknown_config_key_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[problem]\nname = \"poisson1d\"\n[train]\nstepz = 3\n").unwrap();
    let out = rgnp()
        .args(["train", "--config", cfg.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stepz"));
}

#[test]
fn missing_file_exits_with_io_code() {
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("absent.rgnp");
    let out = rgnp().args(["inspect-checkpoint", "--checkpoint", ck.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn bad_arguments_exit_with_code_two() {
    assert_eq!(run(&["train", "--no-such-flag"]), 2);
    assert_eq!(run(&["--help"]), 0);
}

#[test]
fn evaluate_matches_golden_report() {
    let dir = tempfile::tempdir().unwrap();
    let code = run(&[
        "evaluate",
        "--config",
        data("tiny_poisson.toml").to_str().unwrap(),
        "--checkpoint",
        data("golden_poisson.rgnp").to_str().unwrap(),
        "--seed",
        "11",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    for name in ["eval_samples.csv", "eval_summary.csv"] {
        let (h_got, got) = read_csv(&dir.path().join(name));
        let (h_want, want) = read_csv(&data(&format!("golden_{name}")));
        assert_eq!(h_got, h_want);
        assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().flatten().zip(want.iter().flatten()) {
            if w.is_nan() {
                assert!(g.is_nan());
            } else {
                assert!((g - w).abs() <= 1e-9 * w.abs().max(1.0), "{name}: {g} vs {w}");
            }
        }
    }
}

#[test]
fn out_of_prior_prediction_still_writes_output() {
    let dir = tempfile::tempdir().unwrap();
    let pts = dir.path().join("points.csv");
    std::fs::write(&pts, "x\n-0.5\n0.0\n0.5\n").unwrap();
    let code = run(&[
        "predict-forward",
        "--checkpoint",
        data("golden_poisson.rgnp").to_str().unwrap(),
        "--z",
        "3.0,0,0,0",
        "--w",
        "5.0",
        "--points",
        pts.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let (head, rows) = read_csv(&dir.path().join("forward.csv"));
    assert_eq!(head, ["x0", "mean0", "std0"]);
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().flatten().all(|v| v.is_finite()));
}

#[test]
fn predict_inverse_and_reference_solve_write_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let cfg = data("tiny_poisson.toml");
    let code = run(&["reference-solve", "--config", cfg.to_str().unwrap(), "--z", "0.2,-0.1,0.3,0", "--w", "1.5", "--out-dir", out]);
    assert_eq!(code, 0);
    let (head, rows) = read_csv(&dir.path().join("reference.csv"));
    assert_eq!(head, ["x0", "u"]);
    assert_eq!(rows.len(), rgnp::reference::POISSON_NODES);
    // boundary values are zero
    assert_eq!(rows[0][1], 0.0);

    let field = dir.path().join("field.csv");
    let mut text = String::from("x,u\n");
    for r in rows.iter().step_by(16) {
        text.push_str(&format!("{},{}\n", r[0], r[1]));
    }
    std::fs::write(&field, text).unwrap();
    let code = run(&[
        "predict-inverse",
        "--checkpoint",
        data("golden_poisson.rgnp").to_str().unwrap(),
        "--field",
        field.to_str().unwrap(),
        "--w",
        "1.5",
        "--out-dir",
        out,
    ]);
    assert_eq!(code, 0);
    let inv = std::fs::read_to_string(dir.path().join("inverse.csv")).unwrap();
    assert_eq!(inv.lines().count(), 5);
}

#[test]
fn dataset_and_inspection_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let cfg = data("tiny_poisson.toml");
    assert_eq!(run(&["make-dataset", "--config", cfg.to_str().unwrap(), "--n-records", "3", "--seed", "2", "--out-dir", out]), 0);
    let ds = rgnp::objective::Dataset::load(&dir.path().join("dataset.rgnd")).unwrap();
    assert_eq!(ds.records.len(), 3);
    assert_eq!(ds.records[0].y.len(), 60);
    assert_eq!(run(&["inspect-checkpoint", "--checkpoint", data("golden_poisson.rgnp").to_str().unwrap()]), 0);
}

#[test]
fn shipped_configs_parse_and_validate() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(root).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = rgnp::evalcli::RunConfig::load(&path).unwrap();
            let problem = rgnp::pde::Problem::new(&cfg.problem).unwrap();
            cfg.elbo.validate(&problem).unwrap();
            cfg.train.validate().unwrap();
            seen += 1;
        }
    }
    assert!(seen >= 4);
}
