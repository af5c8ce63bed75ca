//! Batch execution of a scenario over several seeds.

use std::path::{Path, PathBuf};
use std::time::Instant;

use junction_core::eval::run_metrics;
use junction_core::sim::{simulate, SimLog, SimOptions};
use junction_core::world::{Scenario, ScenarioSpec};
use rayon::prelude::*;

use crate::error::Result;
use crate::io::{load_scenario, validate_scenario};
use crate::output::{write_aggregate, write_run, RunSummary};
use crate::report::load_batch;

/// Thread count for parallel repetitions.
pub const THREADS_ENV: &str = "JUNCTION_THREADS";

/// Moving-average window of the executed jerk statistic, seconds.
pub const JERK_WINDOW: f64 = 0.3;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: PathBuf,
    pub reps: usize,
    /// First seed; repetition `k` uses `seed + k`. Defaults to the scenario seed.
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub hz: Option<f64>,
    pub duration: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub log: SimLog,
    pub summary: RunSummary,
}

pub fn run_once(sc: &Scenario, seed: u64) -> Result<RunOutput> {
    run_with(sc, seed, &SimOptions::default())
}

pub fn run_with(sc: &Scenario, seed: u64, opts: &SimOptions) -> Result<RunOutput> {
    let start = Instant::now();
    let mut clock = || start.elapsed().as_secs_f64();
    let log = simulate(sc, seed, opts, &mut clock)?;
    let metrics = run_metrics(&log, sc, JERK_WINDOW);
    Ok(RunOutput {
        summary: RunSummary {
            termination: log.termination,
            metrics,
        },
        log,
    })
}

fn thread_count() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|n| *n > 0)
}

/// Runs `f` on a pool sized by [`THREADS_ENV`], or on rayon's default pool.
pub fn with_pool<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    match thread_count().and_then(|n| rayon::ThreadPoolBuilder::new().num_threads(n).build().ok()) {
        Some(pool) => pool.install(f),
        None => f(),
    }
}

/// Simulates every seed, in parallel across repetitions, in seed order.
pub fn run_seeds(sc: &Scenario, seeds: &[u64]) -> Result<Vec<RunOutput>> {
    with_pool(|| seeds.par_iter().map(|s| run_once(sc, *s)).collect())
}

pub fn apply_overrides(spec: &mut ScenarioSpec, cfg: &RunConfig) {
    if let Some(hz) = cfg.hz {
        spec.plan_hz = hz;
    }
    if let Some(d) = cfg.duration {
        spec.duration = d;
    }
}

/// Loads the scenario, runs all repetitions and writes the artifacts. The
/// aggregate CSV covers every run found in the output directory.
pub fn run(cfg: &RunConfig) -> Result<Vec<RunOutput>> {
    let mut spec = load_scenario(&cfg.scenario)?;
    apply_overrides(&mut spec, cfg);
    validate_scenario(&spec, &cfg.scenario)?;
    let first = cfg.seed.unwrap_or(spec.seed);
    let seeds: Vec<u64> = (0..cfg.reps as u64).map(|k| first + k).collect();
    let sc = Scenario::build(spec)?;
    let runs = run_seeds(&sc, &seeds)?;
    write_outputs(&cfg.out, &runs)?;
    Ok(runs)
}

pub fn write_outputs(dir: &Path, runs: &[RunOutput]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| crate::error::Error::io(dir, e))?;
    for r in runs {
        write_run(dir, &r.log, &r.summary)?;
    }
    let all: Vec<RunSummary> = load_batch(dir)?.into_iter().map(|r| r.summary).collect();
    write_aggregate(dir, &all)?;
    Ok(())
}
