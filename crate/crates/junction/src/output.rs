//! Run artifacts.
//!
//! Per run, with `stem = <scenario>_seed<seed>`:
//!
//! | file                         | content                                  |
//! |------------------------------|------------------------------------------|
//! | `<stem>.csv`                 | ego trajectory, one row per physics step |
//! | `<stem>.candidates.json`     | per-cycle plan and evaluated candidates  |
//! | `<stem>.metrics.json`        | [`RunSummary`]                           |
//! | `<stem>.planning_times.txt`  | wall-clock planning seconds per cycle    |
//!
//! Trajectory columns, in this order: `t, x, y, phi, v, a, delta, a_perp,
//! d_perp, s, d_lane, ego_objects, ext_objects`. The last two hold the ids
//! in the ego and external object lists separated by `;`.
//!
//! Everything except the planning times is byte-identical between runs with
//! the same scenario and seed.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use junction_core::eval::RunMetrics;
use junction_core::sim::{CycleRecord, SimLog, Termination};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TRAJECTORY_COLUMNS: [&str; 13] = [
    "t",
    "x",
    "y",
    "phi",
    "v",
    "a",
    "delta",
    "a_perp",
    "d_perp",
    "s",
    "d_lane",
    "ego_objects",
    "ext_objects",
];

pub const AGGREGATE_COLUMNS: [&str; 10] = [
    "name",
    "seed",
    "category",
    "t_f",
    "min_d_lane",
    "max_jerk_smoothed",
    "max_jerk_raw",
    "max_jerk_planned",
    "termination",
    "fail_safe_cycles",
];

pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const METRICS_SUFFIX: &str = ".metrics.json";
pub const PLAN_TIMES_SUFFIX: &str = ".planning_times.txt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub termination: Termination,
    pub metrics: RunMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct CandidatesFile<'a> {
    name: &'a str,
    seed: u64,
    cycles: &'a [CycleRecord],
}

pub fn stem(name: &str, seed: u64) -> String {
    format!("{name}_seed{seed}")
}

fn ids(list: &[u32]) -> String {
    list.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(";")
}

pub fn write_trajectory_csv<W: Write>(w: W, log: &SimLog) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TRAJECTORY_COLUMNS)?;
    for f in &log.frames {
        let nums = [f.t, f.x, f.y, f.phi, f.v, f.a, f.delta, f.a_perp, f.d_perp, f.s, f.d_lane];
        let mut rec: Vec<String> = nums.iter().map(|x| x.to_string()).collect();
        rec.push(ids(&f.ego_list));
        rec.push(ids(&f.ext_list));
        out.write_record(&rec)?;
    }
    out.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

pub fn write_candidates_json<W: Write>(mut w: W, log: &SimLog) -> Result<()> {
    let file = CandidatesFile {
        name: &log.name,
        seed: log.seed,
        cycles: &log.cycles,
    };
    serde_json::to_writer_pretty(&mut w, &file)?;
    writeln!(w).map_err(|e| Error::Json(serde_json::Error::io(e)))?;
    Ok(())
}

pub fn write_metrics_json<W: Write>(mut w: W, summary: &RunSummary) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, summary)?;
    writeln!(w).map_err(|e| Error::Json(serde_json::Error::io(e)))?;
    Ok(())
}

pub fn write_plan_times<W: Write>(mut w: W, log: &SimLog) -> std::io::Result<()> {
    for t in &log.plan_times {
        writeln!(w, "{t}")?;
    }
    w.flush()
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_aggregate_csv<W: Write>(w: W, runs: &[RunSummary]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(AGGREGATE_COLUMNS)?;
    for r in runs {
        let m = &r.metrics;
        out.write_record([
            m.name.clone(),
            m.seed.to_string(),
            m.category.map(|c| c.as_str().to_string()).unwrap_or_default(),
            opt(m.t_f),
            m.min_d_lane.to_string(),
            m.max_jerk_smoothed.to_string(),
            m.max_jerk_raw.to_string(),
            m.max_jerk_planned.to_string(),
            termination_str(r.termination).to_string(),
            m.fail_safe_cycles.to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

pub fn termination_str(t: Termination) -> &'static str {
    match t {
        Termination::Completed => "completed",
        Termination::Timeout => "timeout",
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

/// Writes the four per-run files into `dir` and returns their paths.
pub fn write_run(dir: &Path, log: &SimLog, summary: &RunSummary) -> Result<Vec<PathBuf>> {
    let stem = stem(&log.name, log.seed);
    let paths: Vec<PathBuf> = [".csv", ".candidates.json", METRICS_SUFFIX, PLAN_TIMES_SUFFIX]
        .iter()
        .map(|s| dir.join(format!("{stem}{s}")))
        .collect();
    write_trajectory_csv(create(&paths[0])?, log)?;
    write_candidates_json(create(&paths[1])?, log)?;
    write_metrics_json(create(&paths[2])?, summary)?;
    write_plan_times(create(&paths[3])?, log).map_err(|e| Error::io(&paths[3], e))?;
    Ok(paths)
}

pub fn write_aggregate(dir: &Path, runs: &[RunSummary]) -> Result<PathBuf> {
    let path = dir.join(AGGREGATE_FILE);
    write_aggregate_csv(create(&path)?, runs)?;
    Ok(path)
}
