//! `rgnp` command-line interface.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use rgnp::evalcli::evaluate::{rows_to_mat, split_columns};
use rgnp::evalcli::{evaluate, predict_forward, predict_inverse, Checkpoint, EvalOptions, RunConfig};
use rgnp::objective::{Dataset, ElboMode, Trainer};
use rgnp::pde::Problem;
use rgnp::reference::{make_dataset, reference_solve};
use rgnp::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "rgnp", version, about = "Physics-informed emulators on random collocation grids")]
pub struct Cli {
    /// Configuration file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides `train.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write metrics and checkpoints.
    Train {
        /// Dataset for data modes; `data.path` when absent.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Compare a checkpoint against reference solutions on prior draws.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        n_test: Option<usize>,
    },
    /// Predictive mean and standard deviation at the points of a CSV file.
    PredictForward {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        z: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        w: Vec<f64>,
        /// CSV with a header and one column per coordinate.
        #[arg(long)]
        points: PathBuf,
    },
    /// Posterior mean and standard deviation of `z` for an observed field.
    PredictInverse {
        #[arg(long)]
        checkpoint: PathBuf,
        /// CSV with coordinate columns followed by one column per field.
        #[arg(long)]
        field: PathBuf,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        w: Vec<f64>,
    },
    /// Generate a noisy observation dataset from reference solutions.
    MakeDataset {
        #[arg(long)]
        n_records: Option<usize>,
    },
    /// Solve the reference problem at one parameter value.
    ReferenceSolve {
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        z: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        w: Vec<f64>,
    },
    /// Print checkpoint metadata and tensor shapes.
    InspectCheckpoint {
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

/// Parses `args` and runs the command. Returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Some(n) = std::env::var("RGNP_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 && !rgnp::parallel::init_threads(n) {
            log::debug!("worker pool already initialized");
        }
    }
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn require_config(cli: &Cli) -> Result<RunConfig> {
    let path = cli.config.as_ref().ok_or_else(|| Error::Config("--config is required".into()))?;
    RunConfig::load(path)
}

fn out_dir(cli: &Cli) -> Result<PathBuf> {
    let dir = cli.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn read_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(csv_err)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let row = rec
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| Error::Format(format!("{}: {e}", path.display()))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("{other:?}")),
    }
}

fn warn_outside_prior(problem: &Problem, z: &[f64], w: &[f64]) {
    if !problem.in_prior(z, w) {
        log::warn!("z = {z:?}, w = {w:?} lies outside the training prior; extrapolating");
    }
}

fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Train { dataset } => {
            let mut cfg = require_config(cli)?;
            let seed = cli.seed.unwrap_or(cfg.train.seed);
            cfg.train.seed = seed;
            let ds = if cfg.elbo.mode == ElboMode::Physics {
                None
            } else {
                let path = dataset
                    .clone()
                    .or_else(|| cfg.dataset_path())
                    .ok_or_else(|| Error::Config("data mode needs --dataset or data.path".into()))?;
                Some(Dataset::load(&path)?)
            };
            let dir = out_dir(cli)?;
            let mut trainer = Trainer::new(&cfg.model(), &cfg.elbo, &cfg.train, seed, ds)?;
            let every = cfg.train.log_every.max(cfg.train.steps / 20).max(1);
            trainer.run(Some(&dir), |m| {
                if m.step % every == 0 {
                    log::info!(
                        "step {} elbo {:.6e} residual {:.4e} eps_r {:.3e}",
                        m.step,
                        m.terms.elbo(),
                        m.terms.residual,
                        m.eps_r
                    );
                }
            })?;
            println!("{}", dir.join("checkpoint.rgnp").display());
            Ok(())
        }
        Command::Evaluate { checkpoint, n_test } => {
            let ck = Checkpoint::load(checkpoint)?;
            let model = ck.model()?;
            let cfg = cli.config.as_ref().map(|p| RunConfig::load(p)).transpose()?;
            let eval = cfg.as_ref().map(|c| c.eval.clone()).unwrap_or_default();
            let opts = EvalOptions {
                n_test: n_test.unwrap_or(if eval.n_test == 0 { 100 } else { eval.n_test }),
                seed: cli.seed.unwrap_or(0),
                z_range: eval.z_range.map(|r| r.iter().map(|&[a, b]| (a, b)).collect()),
                inverse_points: eval
                    .inverse_points
                    .unwrap_or_else(|| ck.meta.elbo.collocation(&model.problem)),
            };
            let report = evaluate(&model, &opts)?;
            let dir = out_dir(cli)?;
            report.write_samples_csv(std::io::BufWriter::new(std::fs::File::create(dir.join("eval_samples.csv"))?))?;
            report.write_summary_csv(std::fs::File::create(dir.join("eval_summary.csv"))?)?;
            report.write_summary_csv(std::io::stdout().lock())?;
            log::info!("evaluated {} draws in {:.1} s", report.samples.len(), report.wall_ms / 1e3);
            Ok(())
        }
        Command::PredictForward { checkpoint, z, w, points } => {
            let model = Checkpoint::load(checkpoint)?.model()?;
            let p = &model.problem;
            if z.len() != p.n_z() || w.len() != p.n_w() {
                return Err(Error::Config(format!("expected {} z and {} w values", p.n_z(), p.n_w())));
            }
            warn_outside_prior(p, z, w);
            let rows = read_csv(points)?;
            let pts = rows_to_mat(&rows)?;
            if pts.ncols() != p.dim() {
                return Err(Error::Shape(format!("points need {} columns", p.dim())));
            }
            let (mean, std) = predict_forward(&model, &pts, z, w)?;
            let mut out = std::io::BufWriter::new(std::fs::File::create(out_dir(cli)?.join("forward.csv"))?);
            let mut head: Vec<String> = (0..p.dim()).map(|k| format!("x{k}")).collect();
            for f in 0..p.n_fields() {
                head.push(format!("mean{f}"));
                head.push(format!("std{f}"));
            }
            writeln!(out, "{}", head.join(","))?;
            for i in 0..pts.nrows() {
                let mut row: Vec<String> = pts.row(i).iter().map(|v| format!("{v:e}")).collect();
                for f in 0..p.n_fields() {
                    row.push(format!("{:e}", mean[[i, f]]));
                    row.push(format!("{:e}", std[[i, f]]));
                }
                writeln!(out, "{}", row.join(","))?;
            }
            out.flush()?;
            Ok(())
        }
        Command::PredictInverse { checkpoint, field, w } => {
            let model = Checkpoint::load(checkpoint)?.model()?;
            let p = &model.problem;
            if w.len() != p.n_w() {
                return Err(Error::Config(format!("expected {} w values", p.n_w())));
            }
            let rows = read_csv(field)?;
            let all = rows_to_mat(&rows)?;
            if all.ncols() != p.dim() + p.n_fields() {
                return Err(Error::Shape(format!("field file needs {} columns", p.dim() + p.n_fields())));
            }
            let (pts, vals) = split_columns(&all, p.dim())?;
            let (mean, std) = predict_inverse(&model, &vals, &pts, w)?;
            let mut out = std::io::BufWriter::new(std::fs::File::create(out_dir(cli)?.join("inverse.csv"))?);
            writeln!(out, "component,mean,std")?;
            for k in 0..mean.len() {
                writeln!(out, "z{k},{:e},{:e}", mean[k], std[k])?;
            }
            out.flush()?;
            Ok(())
        }
        Command::MakeDataset { n_records } => {
            let cfg = require_config(cli)?;
            let problem = Problem::new(&cfg.problem)?;
            let seed = cli.seed.unwrap_or(cfg.train.seed);
            let ds = make_dataset(
                &problem,
                n_records.unwrap_or(cfg.data.n_records),
                cfg.data.points_per_record,
                cfg.data.sigma_n,
                seed,
            )?;
            let path = out_dir(cli)?.join("dataset.rgnd");
            ds.save(&path)?;
            println!("{}", path.display());
            Ok(())
        }
        Command::ReferenceSolve { z, w } => {
            let cfg = require_config(cli)?;
            let problem = Problem::new(&cfg.problem)?;
            if z.len() != problem.n_z() || w.len() != problem.n_w() {
                return Err(Error::Config(format!(
                    "expected {} z and {} w values",
                    problem.n_z(),
                    problem.n_w()
                )));
            }
            warn_outside_prior(&problem, z, w);
            let sol = reference_solve(&problem, z, w)?;
            let axes: Vec<Vec<f64>> = (0..sol.interp.axes.len()).map(|k| sol.nodes(k)).collect();
            let mut out = std::io::BufWriter::new(std::fs::File::create(out_dir(cli)?.join("reference.csv"))?);
            if axes.len() == 1 {
                writeln!(out, "x0,u")?;
                for (x, u) in axes[0].iter().zip(sol.values()) {
                    writeln!(out, "{x:e},{u:e}")?;
                }
            } else {
                writeln!(out, "x0,x1,u")?;
                let n1 = axes[1].len();
                for (i, x) in axes[0].iter().enumerate() {
                    for (k, t) in axes[1].iter().enumerate() {
                        writeln!(out, "{x:e},{t:e},{:e}", sol.values()[i * n1 + k])?;
                    }
                }
            }
            out.flush()?;
            log::info!(
                "{} Newton iterations, residual {:e}",
                sol.newton_iterations,
                sol.residual_norm
            );
            Ok(())
        }
        Command::InspectCheckpoint { checkpoint } => {
            let ck = Checkpoint::load(checkpoint)?;
            println!("{}", ck.meta_json_pretty()?);
            for (name, t) in ck.meta.param_names.iter().zip(&ck.params) {
                println!("{name}: {} x {}", t.nrows(), t.ncols());
            }
            Ok(())
        }
    }
}
