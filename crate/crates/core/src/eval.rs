//! Lane keeping, maneuver categorization and jerk statistics.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{bbox_corners, BoundingBox, PathRef, Polygon, Vec2};
use crate::sim::SimLog;
use crate::tracking::{VehicleParams, VehicleState};
use crate::world::Scenario;

/// Signed lane distance of a box: positive while all corners are on the
/// lane. Left corners are measured against `left`, right corners against
/// `right`.
pub fn d_lane(ego_box: &BoundingBox, left: &PathRef, right: &PathRef) -> Result<f64> {
    let [fl, fr, rr, rl] = bbox_corners(ego_box);
    let d_fl = left.project(fl)?.d;
    let d_rl = left.project(rl)?.d;
    let d_fr = right.project(fr)?.d;
    let d_rr = right.project(rr)?.d;
    Ok((-d_fl).min(d_fr).min(d_rr).min(-d_rl))
}

/// Bounding box of a vehicle whose reference point is the rear axle.
pub fn vehicle_box(state: &VehicleState, params: &VehicleParams) -> BoundingBox {
    BoundingBox {
        center: state.position() + Vec2::from_angle(state.phi) * params.center_offset(),
        heading: state.phi,
        length: params.length,
        width: params.width,
    }
}

/// Lane polygon between two boundaries sampled over `[s0, s1]`.
pub fn lane_polygon(left: &PathRef, right: &PathRef, s0: f64, s1: f64, step: f64) -> Polygon {
    let n = ((s1 - s0) / step).ceil().max(1.0) as usize;
    let mut v: Vec<Vec2> = (0..=n).map(|k| right.position_at(s0 + (s1 - s0) * k as f64 / n as f64)).collect();
    v.extend((0..=n).rev().map(|k| left.position_at(s0 + (s1 - s0) * k as f64 / n as f64)));
    Polygon::new(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManeuverCategory {
    NoTraffic,
    MergeBefore,
    MergeBehind,
    MergeGapClass1,
    MergeGapClass2,
    StopThenMerge,
    /// Held at the yield line until the run ended.
    Yielded,
}

impl ManeuverCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            ManeuverCategory::NoTraffic => "no_traffic",
            ManeuverCategory::MergeBefore => "merge_before",
            ManeuverCategory::MergeBehind => "merge_behind",
            ManeuverCategory::MergeGapClass1 => "merge_gap_class1",
            ManeuverCategory::MergeGapClass2 => "merge_gap_class2",
            ManeuverCategory::StopThenMerge => "stop_then_merge",
            ManeuverCategory::Yielded => "yielded",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StandstillConfig {
    pub v_threshold: f64,
    pub min_duration: f64,
    /// Distance before the yield line that still counts as at the line.
    pub line_tolerance: f64,
    pub gap_speed_ratio: f64,
}

impl Default for StandstillConfig {
    fn default() -> Self {
        StandstillConfig {
            v_threshold: 0.1,
            min_duration: 0.3,
            line_tolerance: 1.5,
            gap_speed_ratio: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManeuverRecord {
    pub category: ManeuverCategory,
    /// Arrival at the point of guaranteed arrival; absent for held runs.
    pub t_f: Option<f64>,
    pub name: alloc::string::String,
    pub seed: u64,
}

/// Standstill intervals `[t_start, t_end]` near `s_stop`.
pub fn standstill_intervals(log: &SimLog, s_stop: f64, cfg: &StandstillConfig) -> Vec<[f64; 2]> {
    let mut out = Vec::new();
    let mut start: Option<f64> = None;
    let mut last_t = 0.0;
    for f in &log.frames {
        let still = f.v < cfg.v_threshold && f.s >= s_stop - cfg.line_tolerance && f.s <= s_stop + 0.1;
        match (still, start) {
            (true, None) => start = Some(f.t),
            (false, Some(t0)) => {
                if last_t - t0 >= cfg.min_duration - 1e-9 {
                    out.push([t0, last_t]);
                }
                start = None;
            }
            _ => {}
        }
        last_t = f.t;
    }
    if let Some(t0) = start {
        if last_t - t0 >= cfg.min_duration - 1e-9 {
            out.push([t0, last_t]);
        }
    }
    out
}

/// Assigns the maneuver category from the passage order at the conflict
/// point and the ego's speed history.
/// First time the ego reaches `s`, linearly interpolated between frames.
pub fn arrival_time(log: &SimLog, s: f64) -> Option<f64> {
    let i = log.frames.iter().position(|f| f.s >= s)?;
    if i == 0 {
        return Some(log.frames[0].t);
    }
    let (a, b) = (&log.frames[i - 1], &log.frames[i]);
    let w = ((s - a.s) / (b.s - a.s)).clamp(0.0, 1.0);
    Some(a.t + w * (b.t - a.t))
}

pub fn categorize_maneuver(log: &SimLog, sc: &Scenario) -> Result<ManeuverRecord> {
    categorize_with(log, sc, &StandstillConfig::default())
}

pub fn categorize_with(log: &SimLog, sc: &Scenario, cfg: &StandstillConfig) -> Result<ManeuverRecord> {
    let j = &sc.spec.junction;
    let record = |category, t_f| ManeuverRecord {
        category,
        t_f,
        name: log.name.clone(),
        seed: log.seed,
    };
    let t_f = arrival_time(log, j.s_pga);
    let stops = standstill_intervals(log, j.s_stop, cfg);
    let Some(t_f) = t_f else {
        let held = stops.last().is_some_and(|w| {
            log.frames.last().is_some_and(|f| (f.t - w[1]).abs() < 1e-9)
        });
        return if held { Ok(record(ManeuverCategory::Yielded, None)) } else { Err(Error::Unfinished) };
    };
    if stops.iter().any(|w| w[0] < t_f) {
        return Ok(record(ManeuverCategory::StopThenMerge, Some(t_f)));
    }
    let s_c = sc.s_conflict;
    let t_pred = sc.rules.t_pred;
    let center = sc.spec.vehicle.center_offset();
    let t_ego = log
        .frames
        .iter()
        .find(|f| f.s + center >= s_c)
        .map(|f| f.t)
        .unwrap_or(t_f);
    // first passage of every main-lane actor
    let main = sc.spec.junction.main_lane;
    let mut pass: BTreeMap<u32, Option<f64>> = BTreeMap::new();
    for f in &log.frames {
        for a in f.actors.iter().filter(|a| a.lane == main) {
            let e = pass.entry(a.id).or_insert(None);
            if e.is_none() && a.active && a.s_common >= s_c {
                *e = Some(f.t);
            }
        }
    }
    let last = log.frames.last().ok_or(Error::Unfinished)?;
    let mut before = 0usize;
    let mut after = 0usize;
    for (id, t) in pass {
        let t_pass = match t {
            Some(t) => t,
            None => {
                let Some(a) = last.actors.iter().find(|a| a.id == id && a.active) else { continue };
                last.t + (s_c - a.s_common) / a.v.max(0.1)
            }
        };
        if (t_pass - t_ego).abs() > t_pred {
            continue;
        }
        if t_pass < t_ego {
            before += 1;
        } else {
            after += 1;
        }
    }
    let category = match (before > 0, after > 0) {
        (false, false) => ManeuverCategory::NoTraffic,
        (false, true) => ManeuverCategory::MergeBefore,
        (true, false) => ManeuverCategory::MergeBehind,
        (true, true) => {
            let v_curve = sc
                .contexts
                .iter()
                .find_map(|c| c.merge.map(|m| m.v_curve))
                .unwrap_or(sc.rules.v_sl.max_value());
            let slowed = log
                .frames
                .iter()
                .filter(|f| f.s < j.s_stop && f.t > 0.0)
                .any(|f| f.v < cfg.gap_speed_ratio * v_curve);
            if slowed {
                ManeuverCategory::MergeGapClass2
            } else {
                ManeuverCategory::MergeGapClass1
            }
        }
    };
    Ok(record(category, Some(t_f)))
}

/// Central-difference jerk of a uniformly sampled acceleration signal and
/// its centered moving average over `window` seconds; returns the maxima
/// of the smoothed and of the raw magnitude.
pub fn jerk_stats(accel: &[f64], dt: f64, window: f64) -> (f64, f64) {
    let n = accel.len();
    if n < 2 {
        return (0.0, 0.0);
    }
    let jerk: Vec<f64> = (0..n)
        .map(|i| {
            if i == 0 {
                (accel[1] - accel[0]) / dt
            } else if i == n - 1 {
                (accel[n - 1] - accel[n - 2]) / dt
            } else {
                (accel[i + 1] - accel[i - 1]) / (2.0 * dt)
            }
        })
        .collect();
    let half = ((window / dt).round() as usize) / 2;
    let mut prefix = alloc::vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + jerk[i];
    }
    let smoothed_max = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            ((prefix[hi] - prefix[lo]) / (hi - lo) as f64).abs()
        })
        .fold(0.0, f64::max);
    let raw_max = jerk.iter().map(|j| j.abs()).fold(0.0, f64::max);
    (smoothed_max, raw_max)
}

/// Per-run summary metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub name: alloc::string::String,
    pub seed: u64,
    pub category: Option<ManeuverCategory>,
    pub t_f: Option<f64>,
    pub min_d_lane: f64,
    pub max_jerk_smoothed: f64,
    pub max_jerk_raw: f64,
    pub max_jerk_planned: f64,
    pub max_a_perp: f64,
    pub max_abs_d_perp: f64,
    pub cycles: usize,
    pub max_options: usize,
    pub tracker_stalls: usize,
    pub fail_safe_cycles: usize,
    pub pnr_violations: usize,
    /// The log holds a standstill segment at the yield line.
    pub standstill_at_stop: bool,
}

pub fn run_metrics(log: &SimLog, sc: &Scenario, window: f64) -> RunMetrics {
    let cat = categorize_maneuver(log, sc).ok();
    let accel: Vec<f64> = log.frames.iter().map(|f| f.a).collect();
    let (js, jr) = jerk_stats(&accel, sc.spec.physics_step, window);
    RunMetrics {
        name: log.name.clone(),
        seed: log.seed,
        category: cat.as_ref().map(|c| c.category),
        t_f: cat.and_then(|c| c.t_f),
        min_d_lane: log.frames.iter().map(|f| f.d_lane).fold(f64::INFINITY, f64::min),
        max_jerk_smoothed: js,
        max_jerk_raw: jr,
        max_jerk_planned: log.cycles.iter().map(|c| c.max_jerk_plan).fold(0.0, f64::max),
        max_a_perp: log.frames.iter().map(|f| f.a_perp.abs()).fold(0.0, f64::max),
        max_abs_d_perp: log.frames.iter().map(|f| f.d_perp.abs()).fold(0.0, f64::max),
        cycles: log.cycles.len(),
        max_options: log.cycles.iter().map(|c| c.n_options).max().unwrap_or(0),
        tracker_stalls: log.cycles.iter().filter(|c| c.tracker_stall).count(),
        fail_safe_cycles: log
            .cycles
            .iter()
            .filter(|c| c.option == crate::context::BehaviorKind::FailSafe)
            .count(),
        pnr_violations: log.cycles.iter().filter(|c| !c.pnr_ok).count(),
        standstill_at_stop: !standstill_intervals(log, sc.spec.junction.s_stop, &StandstillConfig::default()).is_empty(),
    }
}
