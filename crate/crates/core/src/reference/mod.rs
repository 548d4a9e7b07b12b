//! Classical reference solutions and synthetic observation datasets.

pub mod fd;
pub mod interp;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::domain::{sample_grid, GridMeasure};
use crate::error::{Error, Result};
use crate::objective::{Dataset, Record};
use crate::parallel::map_ordered;
use crate::pde::{Problem, ProblemKind};
use crate::rng::{stream, TAG_DATASET};

pub use fd::{solve_burgers, solve_poisson, thomas, FdSolution};
pub use interp::{InterpJet, Interpolant, UniformAxis};

/// Nodes of the Poisson reference grid.
pub const POISSON_NODES: usize = 513;
/// Spatial nodes and time steps of the Burgers reference grid.
pub const BURGERS_NX: usize = 257;
pub const BURGERS_NT: usize = 256;
/// Redraws of a record whose solve failed.
const MAX_REDRAWS: u64 = 10;

/// Reference solution of `problem` at `(z, w)` on the default resolution.
pub fn reference_solve(problem: &Problem, z: &[f64], w: &[f64]) -> Result<FdSolution> {
    match problem.kind {
        ProblemKind::Poisson1d => solve_poisson(z, w[0], POISSON_NODES),
        ProblemKind::Burgers => solve_burgers(z[0], z[1], w[0], BURGERS_NX, BURGERS_NT),
        ProblemKind::NsLid => Err(Error::Config("no reference solver for the cavity problem".into())),
    }
}

/// Noisy point observations of reference solutions at prior draws.
pub fn make_dataset(
    problem: &Problem,
    n_records: usize,
    points_per_record: usize,
    sigma_n: f64,
    seed: u64,
) -> Result<Dataset> {
    if problem.kind == ProblemKind::NsLid {
        return Err(Error::Config("no reference solver for the cavity problem".into()));
    }
    if !(sigma_n >= 0.0) || points_per_record == 0 {
        return Err(Error::Config("dataset needs sigma_n >= 0 and at least one point".into()));
    }
    let ids: Vec<u64> = (0..n_records as u64).collect();
    let records = map_ordered(&ids, |&i| {
        let mut last = None;
        for attempt in 0..MAX_REDRAWS {
            let mut rng = stream(seed, &[TAG_DATASET, i, attempt]);
            let z = problem.sample_z(&mut rng);
            let w = problem.sample_w(&mut rng);
            let sol = match reference_solve(problem, &z, &w) {
                Ok(s) => s,
                Err(e) => {
                    log::warn!("record {i}: redrawing after solver failure: {e}");
                    last = Some(e);
                    continue;
                }
            };
            let x = sample_grid(&problem.domain, points_per_record, GridMeasure::Uniform, &mut rng)?.points;
            let y = x
                .rows()
                .into_iter()
                .map(|p| sol.eval(p.as_slice().expect("row")) + sigma_n * rng.sample::<f64, _>(StandardNormal))
                .collect();
            return Ok(Record { z, w, x, y });
        }
        Err(last.unwrap_or_else(|| Error::Solver("no attempts".into())))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { records, sigma_n, seed })
}
