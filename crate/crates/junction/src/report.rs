//! Aggregate tables over a directory of run artifacts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use junction_core::sim::Termination;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::read_json;
use crate::output::{RunSummary, METRICS_SUFFIX, PLAN_TIMES_SUFFIX};

/// Runs whose smallest lane margin falls below this are flagged.
pub const D_LANE_FLAG: f64 = 0.1;
/// Band holding most lane margins of merging runs.
pub const D_LANE_BAND: [f64; 2] = [0.2, 0.4];
pub const REPORT_CSV: &str = "report.csv";

#[derive(Debug, Clone)]
pub struct BatchRun {
    pub stem: String,
    pub summary: RunSummary,
    pub plan_times: Vec<f64>,
}

/// Every `*.metrics.json` in `dir` with its planning times, sorted by file name.
pub fn load_batch(dir: &Path) -> Result<Vec<BatchRun>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths: Vec<PathBuf> = Vec::new();
    for e in entries {
        let p = e.map_err(|e| Error::io(dir, e))?.path();
        if p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(METRICS_SUFFIX)) {
            paths.push(p);
        }
    }
    paths.sort();
    let mut runs = Vec::with_capacity(paths.len());
    for p in paths {
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let stem = name.trim_end_matches(METRICS_SUFFIX).to_string();
        let summary: RunSummary = read_json(&p)?;
        let times_path = dir.join(format!("{stem}{PLAN_TIMES_SUFFIX}"));
        let plan_times = match std::fs::read_to_string(&times_path) {
            Ok(text) => text.lines().filter_map(|l| l.trim().parse().ok()).collect(),
            Err(_) => Vec::new(),
        };
        runs.push(BatchRun {
            stem,
            summary,
            plan_times,
        });
    }
    Ok(runs)
}

/// Nearest-rank percentile of sorted data.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = (q / 100.0 * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupStats {
    pub group: String,
    pub runs: usize,
    pub completed: usize,
    pub t_f_min: Option<f64>,
    pub t_f_max: Option<f64>,
    pub t_f_spread: Option<f64>,
    pub d_lane_min: f64,
    pub d_lane_median: f64,
    pub d_lane_max: f64,
    pub d_lane_flagged: usize,
    pub d_lane_in_band: usize,
    pub max_jerk_smoothed: f64,
    pub max_jerk_planned: f64,
    pub plan_ms_p50: f64,
    pub plan_ms_p90: f64,
    pub plan_ms_p99: f64,
    pub plan_ms_max: f64,
}

fn stats(group: &str, runs: &[&BatchRun]) -> GroupStats {
    let t_f: Vec<f64> = runs.iter().filter_map(|r| r.summary.metrics.t_f).collect();
    let t_f_min = t_f.iter().copied().reduce(f64::min);
    let t_f_max = t_f.iter().copied().reduce(f64::max);
    let mut d: Vec<f64> = runs.iter().map(|r| r.summary.metrics.min_d_lane).collect();
    d.sort_by(f64::total_cmp);
    let mut times: Vec<f64> = runs.iter().flat_map(|r| r.plan_times.iter().map(|t| t * 1e3)).collect();
    times.sort_by(f64::total_cmp);
    GroupStats {
        group: group.to_string(),
        runs: runs.len(),
        completed: runs.iter().filter(|r| r.summary.termination == Termination::Completed).count(),
        t_f_min,
        t_f_max,
        t_f_spread: t_f_min.zip(t_f_max).map(|(a, b)| b - a),
        d_lane_min: d.first().copied().unwrap_or(f64::NAN),
        d_lane_median: percentile(&d, 50.0),
        d_lane_max: d.last().copied().unwrap_or(f64::NAN),
        d_lane_flagged: d.iter().filter(|x| **x < D_LANE_FLAG).count(),
        d_lane_in_band: d.iter().filter(|x| (D_LANE_BAND[0]..=D_LANE_BAND[1]).contains(*x)).count(),
        max_jerk_smoothed: runs.iter().map(|r| r.summary.metrics.max_jerk_smoothed).fold(0.0, f64::max),
        max_jerk_planned: runs.iter().map(|r| r.summary.metrics.max_jerk_planned).fold(0.0, f64::max),
        plan_ms_p50: percentile(&times, 50.0),
        plan_ms_p90: percentile(&times, 90.0),
        plan_ms_p99: percentile(&times, 99.0),
        plan_ms_max: times.last().copied().unwrap_or(f64::NAN),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    /// One row per maneuver category, then the `all` row.
    pub groups: Vec<GroupStats>,
    /// Stems of runs whose lane margin fell below [`D_LANE_FLAG`].
    pub flagged: Vec<String>,
}

pub fn group_name(run: &BatchRun) -> &'static str {
    run.summary.metrics.category.map(|c| c.as_str()).unwrap_or("uncategorized")
}

pub fn summarize(runs: &[BatchRun]) -> Report {
    let mut by: BTreeMap<&str, Vec<&BatchRun>> = BTreeMap::new();
    for r in runs {
        by.entry(group_name(r)).or_default().push(r);
    }
    let mut groups: Vec<GroupStats> = by.iter().map(|(g, rs)| stats(g, rs)).collect();
    groups.push(stats("all", &runs.iter().collect::<Vec<_>>()));
    Report {
        groups,
        flagged: runs
            .iter()
            .filter(|r| r.summary.metrics.min_d_lane < D_LANE_FLAG)
            .map(|r| r.stem.clone())
            .collect(),
    }
}

fn cell(x: Option<f64>, prec: usize) -> String {
    match x {
        Some(v) if v.is_finite() => format!("{v:.prec$}"),
        _ => String::from("-"),
    }
}

impl Report {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<18} {:>4} {:>4} {:>8} {:>8} {:>7}  {:>7} {:>7} {:>7} {:>4} {:>6}  {:>7} {:>7}  {:>7} {:>7} {:>7} {:>7}",
            "category", "runs", "done", "t_f min", "t_f max", "spread", "dL min", "dL med", "dL max", "<0.1", "in bnd",
            "u exec", "u plan", "p50 ms", "p90 ms", "p99 ms", "max ms"
        );
        for g in &self.groups {
            let _ = writeln!(
                s,
                "{:<18} {:>4} {:>4} {:>8} {:>8} {:>7}  {:>7.3} {:>7.3} {:>7.3} {:>4} {:>6}  {:>7.3} {:>7.3}  {:>7} {:>7} {:>7} {:>7}",
                g.group,
                g.runs,
                g.completed,
                cell(g.t_f_min, 2),
                cell(g.t_f_max, 2),
                cell(g.t_f_spread, 3),
                g.d_lane_min,
                g.d_lane_median,
                g.d_lane_max,
                g.d_lane_flagged,
                format!("{}/{}", g.d_lane_in_band, g.runs),
                g.max_jerk_smoothed,
                g.max_jerk_planned,
                cell(Some(g.plan_ms_p50), 3),
                cell(Some(g.plan_ms_p90), 3),
                cell(Some(g.plan_ms_p99), 3),
                cell(Some(g.plan_ms_max), 3),
            );
        }
        if self.flagged.is_empty() {
            let _ = writeln!(s, "no run below d_Lane {D_LANE_FLAG} m");
        } else {
            let _ = writeln!(s, "runs below d_Lane {D_LANE_FLAG} m: {}", self.flagged.join(", "));
        }
        s
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for g in &self.groups {
            out.serialize(g)?;
        }
        out.flush().map_err(|e| Error::Csv(e.into()))?;
        Ok(())
    }
}

/// Loads the batch in `dir`, writes `report.csv` next to it and returns the report.
pub fn report(dir: &Path) -> Result<Report> {
    let runs = load_batch(dir)?;
    if runs.is_empty() {
        return Err(Error::EmptyBatch(dir.to_owned()));
    }
    let rep = summarize(&runs);
    let path = dir.join(REPORT_CSV);
    let f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    rep.write_csv(std::io::BufWriter::new(f))?;
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use junction_core::eval::{ManeuverCategory, RunMetrics};

    fn run(stem: &str, cat: Option<ManeuverCategory>, t_f: f64, d: f64) -> BatchRun {
        BatchRun {
            stem: stem.to_string(),
            summary: RunSummary {
                termination: Termination::Completed,
                metrics: RunMetrics {
                    name: stem.to_string(),
                    seed: 1,
                    category: cat,
                    t_f: Some(t_f),
                    min_d_lane: d,
                    max_jerk_smoothed: 0.5,
                    max_jerk_raw: 0.7,
                    max_jerk_planned: 1.0,
                    max_a_perp: 1.0,
                    max_abs_d_perp: 0.1,
                    cycles: 100,
                    max_options: 10,
                    tracker_stalls: 0,
                    fail_safe_cycles: 0,
                    pnr_violations: 0,
                    standstill_at_stop: false,
                },
            },
            plan_times: vec![0.001, 0.002, 0.003],
        }
    }

    #[test]
    fn single_run_gives_one_category_row() {
        let rep = summarize(&[run("a", Some(ManeuverCategory::NoTraffic), 10.0, 0.3)]);
        assert_eq!(rep.groups.len(), 2);
        assert_eq!(rep.groups[0].group, "no_traffic");
        assert_eq!(rep.groups[0].runs, 1);
        assert_eq!(rep.groups[0].t_f_spread, Some(0.0));
        assert_eq!(rep.groups[1].group, "all");
    }

    #[test]
    fn counts_match_inputs() {
        let runs = vec![
            run("a", Some(ManeuverCategory::NoTraffic), 10.0, 0.3),
            run("b", Some(ManeuverCategory::MergeBehind), 12.0, 0.25),
            run("c", Some(ManeuverCategory::MergeBehind), 13.5, 0.05),
            run("d", None, 9.0, 0.5),
        ];
        let rep = summarize(&runs);
        let count = |g: &str| rep.groups.iter().find(|x| x.group == g).map(|x| x.runs);
        assert_eq!(count("no_traffic"), Some(1));
        assert_eq!(count("merge_behind"), Some(2));
        assert_eq!(count("uncategorized"), Some(1));
        assert_eq!(count("all"), Some(4));
        let behind = rep.groups.iter().find(|x| x.group == "merge_behind").unwrap();
        assert!((behind.t_f_spread.unwrap() - 1.5).abs() < 1e-12);
        assert_eq!(behind.d_lane_flagged, 1);
        assert_eq!(behind.d_lane_in_band, 1);
        assert_eq!(rep.flagged, vec![String::from("c")]);
        assert!((behind.plan_ms_p50 - 2.0).abs() < 1e-9);
    }

    #[test]
    fn percentile_nearest_rank() {
        let d = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&d, 50.0), 2.0);
        assert_eq!(percentile(&d, 100.0), 4.0);
        assert_eq!(percentile(&d, 0.0), 1.0);
    }
}
