//! Held-out evaluation of a trained model against reference solutions.

use std::io::Write;
use std::time::Instant;

use ndarray::{Array2, Axis};
use rand::Rng;

use crate::domain::{sample_grid, GridMeasure};
use crate::engine::{Mat, Tape, TapeJet};
use crate::error::{Error, Result};
use crate::objective::{residual_tape, Model};
use crate::parallel::map_ordered;
use crate::pde::ProblemKind;
use crate::reference::reference_solve;
use crate::rng::{stream, TAG_EVAL, TAG_HOLDOUT};

use super::metrics::{nse, MnseSummary};

/// Redraws of a test sample whose reference solve failed.
const MAX_REDRAWS: u64 = 10;

/// Lifted predictive mean and marginal standard deviation of every field at
/// `points`, each `n x F`.
pub fn predict_forward(model: &Model, points: &Mat, z: &[f64], w: &[f64]) -> Result<(Mat, Mat)> {
    let (fields, _) = model.alpha.predict(&model.store, points, z, w)?;
    let (b, d) = model.lift_values(points, w);
    let n = points.nrows();
    let mut mean = Array2::zeros((n, fields.len()));
    let mut std = Array2::zeros((n, fields.len()));
    for (f, g) in fields.iter().enumerate() {
        let s = g.marginal_std();
        for i in 0..n {
            mean[[i, f]] = b[[i, f]] + d[[i, f]] * g.mean[i];
            std[[i, f]] = d[[i, f]].abs() * s[i];
        }
    }
    Ok((mean, std))
}

/// Mean and standard deviation of `z` given a field observed at `points`
/// (`values` is `n x F`).
pub fn predict_inverse(model: &Model, values: &Mat, points: &Mat, w: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let g = model.beta.predict(&model.store, values, points, w)?;
    Ok((g.mean.to_vec(), g.std().to_vec()))
}

/// Fixed evaluation lattice: cell midpoints, 200 cells (1D) or 100 x 100.
pub fn evaluation_lattice(model: &Model) -> Mat {
    let dom = &model.problem.domain;
    let per: usize = if dom.dim() == 1 { 200 } else { 100 };
    let d = dom.dim();
    let m = per.pow(d as u32);
    Array2::from_shape_fn((m, d), |(s, k)| {
        let i = (s / per.pow((d - 1 - k) as u32)) % per;
        dom.lo[k] + (dom.hi[k] - dom.lo[k]) * (i as f64 + 0.5) / per as f64
    })
}

#[derive(Clone, Debug)]
pub struct EvalOptions {
    pub n_test: usize,
    pub seed: u64,
    /// Replaces the prior interval of each `z` component when set.
    pub z_range: Option<Vec<(f64, f64)>>,
    /// Points of the random grid fed to the inverse network.
    pub inverse_points: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleReport {
    pub z: Vec<f64>,
    pub w: Vec<f64>,
    pub nse_u: f64,
    pub nse_z: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub problem: String,
    pub samples: Vec<SampleReport>,
    pub forward: MnseSummary,
    pub inverse: MnseSummary,
    /// Percentages of truth inside the predictive 2-sigma band.
    pub coverage_u: f64,
    pub coverage_z: f64,
    pub wall_ms: f64,
}

struct SampleOut {
    report: SampleReport,
    inside_u: usize,
    total_u: usize,
    inside_z: usize,
}

pub fn evaluate(model: &Model, opts: &EvalOptions) -> Result<EvalReport> {
    let p = &model.problem;
    if p.kind == ProblemKind::NsLid {
        return Err(Error::Config("no reference solutions for the cavity problem; use residual statistics".into()));
    }
    if opts.n_test == 0 || opts.inverse_points == 0 {
        return Err(Error::Config("evaluation needs test draws and inverse points".into()));
    }
    let z_prior = opts.z_range.clone().unwrap_or_else(|| p.z_prior.clone());
    if z_prior.len() != p.n_z() {
        return Err(Error::Config("z range has the wrong number of components".into()));
    }
    let start = Instant::now();
    let lattice = evaluation_lattice(model);
    let ids: Vec<u64> = (0..opts.n_test as u64).collect();
    let outs = map_ordered(&ids, |&i| -> Result<SampleOut> {
        let mut last = None;
        for attempt in 0..MAX_REDRAWS {
            let mut rng = stream(opts.seed, &[TAG_EVAL, i, attempt]);
            let z: Vec<f64> = z_prior.iter().map(|&(a, b)| rng.random_range(a..b)).collect();
            let w = p.sample_w(&mut rng);
            let sol = match reference_solve(p, &z, &w) {
                Ok(s) => s,
                Err(e) => {
                    log::warn!("test draw {i}: redrawing after solver failure: {e}");
                    last = Some(e);
                    continue;
                }
            };
            let truth: Vec<f64> = lattice.rows().into_iter().map(|r| sol.eval(&r.to_vec())).collect();
            let (mean, std) = predict_forward(model, &lattice, &z, &w)?;
            let mean_u = mean.column(0).to_vec();
            let std_u = std.column(0);
            let nse_u = nse(&mean_u, &truth)?;
            let inside_u =
                (0..truth.len()).filter(|&k| (truth[k] - mean_u[k]).abs() <= 2.0 * std_u[k]).count();

            let grid = sample_grid(&p.domain, opts.inverse_points, GridMeasure::Uniform, &mut rng)?.points;
            let field: Vec<f64> = grid.rows().into_iter().map(|r| sol.eval(&r.to_vec())).collect();
            let field = Array2::from_shape_vec((field.len(), 1), field).expect("column");
            let (zm, zs) = predict_inverse(model, &field, &grid, &w)?;
            let nse_z = nse(&zm, &z)?;
            let inside_z = (0..z.len()).filter(|&k| (z[k] - zm[k]).abs() <= 2.0 * zs[k]).count();
            return Ok(SampleOut {
                report: SampleReport { z, w, nse_u, nse_z },
                inside_u,
                total_u: truth.len(),
                inside_z,
            });
        }
        Err(last.unwrap_or_else(|| Error::Solver("no attempts".into())))
    });
    let outs = outs.into_iter().collect::<Result<Vec<_>>>()?;
    let (mut iu, mut tu, mut iz) = (0, 0, 0);
    for o in &outs {
        iu += o.inside_u;
        tu += o.total_u;
        iz += o.inside_z;
    }
    let samples: Vec<SampleReport> = outs.into_iter().map(|o| o.report).collect();
    let forward = MnseSummary::from_samples(samples.iter().map(|s| s.nse_u).collect());
    let inverse = MnseSummary::from_samples(samples.iter().map(|s| s.nse_z).collect());
    Ok(EvalReport {
        problem: p.name().to_string(),
        coverage_u: 100.0 * iu as f64 / tu as f64,
        coverage_z: 100.0 * iz as f64 / (samples.len() * p.n_z()) as f64,
        samples,
        forward,
        inverse,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

impl EvalReport {
    /// Per-sample log-NSE table.
    pub fn write_samples_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let first = self.samples.first();
        let nz = first.map_or(0, |s| s.z.len());
        let nw = first.map_or(0, |s| s.w.len());
        let mut head = vec!["sample".to_string()];
        head.extend((0..nz).map(|k| format!("z{k}")));
        head.extend((0..nw).map(|k| format!("w{k}")));
        head.extend(["nse_u", "log10_nse_u", "nse_z", "log10_nse_z"].map(String::from));
        writeln!(out, "{}", head.join(","))?;
        for (i, s) in self.samples.iter().enumerate() {
            let mut row = vec![i.to_string()];
            row.extend(s.z.iter().chain(&s.w).map(|v| format!("{v:e}")));
            for v in [s.nse_u, s.nse_u.log10(), s.nse_z, s.nse_z.log10()] {
                row.push(format!("{v:e}"));
            }
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// One-row summary table.
    pub fn write_summary_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "problem,n_test,mnse_u,mnse_u_std,mnse_z,mnse_z_std,coverage_u,coverage_z")?;
        writeln!(
            out,
            "{},{},{:e},{:e},{:e},{:e},{:.4},{:.4}",
            self.problem,
            self.samples.len(),
            self.forward.mean,
            self.forward.std,
            self.inverse.mean,
            self.inverse.std,
            self.coverage_u,
            self.coverage_z
        )?;
        Ok(())
    }
}

/// Mean absolute residual of the lifted predictive mean over `n_draws`
/// held-out random grids of `n_points` points.
pub fn held_out_residual(model: &Model, n_draws: usize, n_points: usize, seed: u64) -> Result<f64> {
    let p = &model.problem;
    let spec = p.jet_spec();
    let ids: Vec<u64> = (0..n_draws as u64).collect();
    let sums = map_ordered(&ids, |&i| -> Result<(f64, usize)> {
        let mut rng = stream(seed, &[TAG_HOLDOUT, i]);
        let points = sample_grid(&p.domain, n_points, p.grid, &mut rng)?.points;
        let z = p.sample_z(&mut rng);
        let w = p.sample_w(&mut rng);
        let mut tape = Tape::new();
        let input = model.alpha.input(&points, &z, &w)?;
        let heads = model.alpha.heads_jet(&mut tape, &model.store, &input, &spec)?;
        let mus: Vec<TapeJet> = heads.into_iter().map(|h| h.mu).collect();
        let u = TapeJet::concat_cols(&mut tape, &mus);
        let r = residual_tape(&mut tape, p, &spec, &points, &z, &w, &u)?;
        let v = tape.value(r);
        Ok((v.iter().map(|x| x.abs()).sum(), v.len()))
    });
    let (mut s, mut n) = (0.0, 0);
    for item in sums {
        let (a, b) = item?;
        s += a;
        n += b;
    }
    Ok(s / n as f64)
}

/// Stacks per-point rows into a matrix.
pub fn rows_to_mat(rows: &[Vec<f64>]) -> Result<Mat> {
    let d = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::Shape("ragged rows".into()));
    }
    let views: Vec<_> = rows.iter().map(|r| ndarray::ArrayView1::from(r.as_slice())).collect();
    ndarray::stack(Axis(0), &views).map_err(|e| Error::Shape(e.to_string()))
}

/// Splits columns `[0, k)` and `[k, ncols)`.
pub fn split_columns(m: &Mat, k: usize) -> Result<(Mat, Mat)> {
    if k > m.ncols() {
        return Err(Error::Shape("split beyond the last column".into()));
    }
    Ok((m.slice(ndarray::s![.., ..k]).to_owned(), m.slice(ndarray::s![.., k..]).to_owned()))
}
