//! Parallel execution with worker-count-invariant results.
//!
//! Every replica owns an independent random stream derived from
//! `(master seed, point index, replica index)`, so replicas can run on any
//! thread in any order.  Results are collected positionally and reduced in
//! fixed index order, which makes every aggregate bit-identical whether the
//! pool has one worker or many.

use rayon::prelude::*;
use rayon::ThreadPool;
use starsim_core::coupling::{run_coupled_xy, CoupledRun};
use starsim_core::experiment::{aggregate_point, replica_seed, run_replica, PointResult, PointSpec};
use starsim_core::process::{run_survival, SurvivalSample};
use starsim_core::rng::SeedSpec;
use starsim_core::rounds::RoundRecord;

use crate::CliError;

/// Build a pool with `workers` threads (`0` = one per core).
pub fn build_pool(workers: usize) -> Result<ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

/// Run a grid of points, replicas in parallel, aggregates in point order.
pub fn run_points(
    pool: &ThreadPool,
    specs: &[PointSpec],
    master_seed: u64,
) -> Result<Vec<PointResult>, CliError> {
    for spec in specs {
        spec.validate()?;
    }
    let mut jobs = Vec::new();
    for (point, spec) in specs.iter().enumerate() {
        for replica in 0..spec.replicas {
            jobs.push((point, replica));
        }
    }
    let samples: Result<Vec<SurvivalSample>, starsim_core::Error> = pool.install(|| {
        jobs.par_iter()
            .map(|&(point, replica)| run_replica(&specs[point], master_seed, point as u64, replica))
            .collect()
    });
    let samples = samples?;

    let mut results = Vec::with_capacity(specs.len());
    let mut offset = 0usize;
    for (point, spec) in specs.iter().enumerate() {
        let count = spec.replicas as usize;
        let slice = &samples[offset..offset + count];
        results.push(aggregate_point(point as u64, spec, slice)?);
        offset += count;
    }
    Ok(results)
}

/// Run one point sequentially with round capture, returning the samples and
/// each replica's round decomposition.  The samples are bit-identical to
/// the plain runner's: capture options do not perturb the dynamics, and the
/// seed derivation is the same.
pub fn run_point_with_rounds(
    spec: &PointSpec,
    master_seed: u64,
    point_index: u64,
) -> Result<(Vec<SurvivalSample>, Vec<(u64, Vec<RoundRecord>)>), CliError> {
    spec.validate()?;
    let params = spec.params()?;
    let mut options = spec.options();
    options.capture_rounds = true;
    let mut samples = Vec::with_capacity(spec.replicas as usize);
    let mut rounds = Vec::with_capacity(spec.replicas as usize);
    for replica in 0..spec.replicas {
        let seed = replica_seed(master_seed, point_index, replica)?;
        let out = run_survival(&params, &seed, spec.engine, &options)?;
        samples.push(out.sample);
        rounds.push((replica, out.rounds));
    }
    Ok((samples, rounds))
}

/// Run coupled X/Y pairs in parallel, collected in run order.  Seeds match
/// the core library's bulk audit (`with_path(master, &[k])`), so summaries
/// computed here agree with it bit-for-bit.
pub fn run_coupled(
    pool: &ThreadPool,
    n: u32,
    lambda: f64,
    alpha: f64,
    runs: u64,
    round_cap: u32,
    master_seed: u64,
) -> Result<Vec<CoupledRun>, CliError> {
    if runs == 0 {
        return Err(CliError::Core(starsim_core::Error::InvalidParameter(
            "coupled export needs runs",
        )));
    }
    let collected: Result<Vec<CoupledRun>, starsim_core::Error> = pool.install(|| {
        (0..runs)
            .into_par_iter()
            .map(|k| {
                let seed = SeedSpec::with_path(master_seed, &[k])?;
                run_coupled_xy(n, lambda, alpha, &seed, round_cap)
            })
            .collect()
    });
    Ok(collected?)
}

/// Order-independent reduction of coupled runs, mirroring the core audit's
/// arithmetic (integer sums divided once at the end).
#[derive(Clone, Copy, Debug)]
pub struct CoupledSummary {
    pub runs: u64,
    pub violations: u64,
    pub capped: u64,
    pub mean_psi_x: f64,
    pub mean_psi_y: f64,
    pub ok: bool,
}

pub fn summarize_coupled(runs: &[CoupledRun]) -> CoupledSummary {
    let total = runs.len() as u64;
    let violations = runs.iter().filter(|r| !r.all_ok).count() as u64;
    let capped = runs.iter().filter(|r| r.y_round_capped).count() as u64;
    let sx: u64 = runs.iter().map(|r| u64::from(r.psi_x)).sum();
    let sy: u64 = runs.iter().map(|r| u64::from(r.psi_y)).sum();
    CoupledSummary {
        runs: total,
        violations,
        capped,
        mean_psi_x: sx as f64 / total as f64,
        mean_psi_y: sy as f64 / total as f64,
        ok: violations == 0,
    }
}
