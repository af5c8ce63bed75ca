//! Minimum-jerk longitudinal planning and candidate selection.

use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::context::{BehaviorKind, BehaviorOption, SituationContext, TargetRole};
use crate::error::{Error, Result};
use crate::risk::{aggregate_risk, ObjectPrediction};

/// Position, velocity and acceleration along the reference path.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LongitudinalState {
    pub s: f64,
    pub v: f64,
    pub a: f64,
}

impl LongitudinalState {
    pub const fn new(s: f64, v: f64, a: f64) -> Self {
        LongitudinalState { s, v, a }
    }

    /// Position where constant `a_min` braking from this state comes to rest.
    pub fn stop_position(&self, a_min: f64) -> f64 {
        self.s + self.v.max(0.0).powi(2) / (2.0 * a_min.abs())
    }
}

/// Polynomial `s(τ) = Σ c_k τ^k` on `τ ∈ [0, duration]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySegment {
    pub coeffs: [f64; 6],
    pub duration: f64,
}

impl TrajectorySegment {
    /// The unique quintic meeting both boundary states, optimal for `∫u²/2`.
    pub fn min_jerk(x0: LongitudinalState, xf: LongitudinalState, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::NonpositiveDuration(dt));
        }
        let t = dt;
        let t2 = t * t;
        let t3 = t2 * t;
        let ds = xf.s - (x0.s + x0.v * t + 0.5 * x0.a * t2);
        let dv = xf.v - (x0.v + x0.a * t);
        let da = xf.a - x0.a;
        let c3 = (10.0 * ds - 4.0 * dv * t + 0.5 * da * t2) / t3;
        let c4 = (-15.0 * ds + 7.0 * dv * t - da * t2) / (t3 * t);
        let c5 = (6.0 * ds - 3.0 * dv * t + 0.5 * da * t2) / (t3 * t2);
        Ok(TrajectorySegment {
            coeffs: [x0.s, x0.v, 0.5 * x0.a, c3, c4, c5],
            duration: dt,
        })
    }

    /// Constant-acceleration segment (used for the braking fail-safe).
    pub fn constant_accel(x0: LongitudinalState, a: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::NonpositiveDuration(dt));
        }
        Ok(TrajectorySegment {
            coeffs: [x0.s, x0.v, 0.5 * a, 0.0, 0.0, 0.0],
            duration: dt,
        })
    }

    pub fn state(&self, tau: f64) -> LongitudinalState {
        let c = &self.coeffs;
        let t = tau;
        let s = c[0] + t * (c[1] + t * (c[2] + t * (c[3] + t * (c[4] + t * c[5]))));
        let v = c[1] + t * (2.0 * c[2] + t * (3.0 * c[3] + t * (4.0 * c[4] + t * 5.0 * c[5])));
        let a = 2.0 * c[2] + t * (6.0 * c[3] + t * (12.0 * c[4] + t * 20.0 * c[5]));
        LongitudinalState { s, v, a }
    }

    pub fn jerk(&self, tau: f64) -> f64 {
        let c = &self.coeffs;
        6.0 * c[3] + tau * (24.0 * c[4] + tau * 60.0 * c[5])
    }

    pub fn end_state(&self) -> LongitudinalState {
        self.state(self.duration)
    }

    /// `∫₀^T u²/2 dτ` in closed form.
    pub fn jerk_cost(&self) -> f64 {
        let c = &self.coeffs;
        let (j0, j1, j2) = (6.0 * c[3], 24.0 * c[4], 60.0 * c[5]);
        let t = self.duration;
        let t2 = t * t;
        let t3 = t2 * t;
        let integral = j0 * j0 * t
            + j0 * j1 * t2
            + (j1 * j1 + 2.0 * j0 * j2) * t3 / 3.0
            + j1 * j2 * t3 * t / 2.0
            + j2 * j2 * t3 * t2 / 5.0;
        0.5 * integral
    }

    /// Largest `|u|` on the segment (jerk is quadratic in τ).
    pub fn max_abs_jerk(&self) -> f64 {
        let c = &self.coeffs;
        let mut m = self.jerk(0.0).abs().max(self.jerk(self.duration).abs());
        if c[5] != 0.0 {
            let tau = -24.0 * c[4] / (120.0 * c[5]);
            if tau > 0.0 && tau < self.duration {
                m = m.max(self.jerk(tau).abs());
            }
        }
        m
    }
}

/// A concatenation of segments starting at `t = 0` of the planning cycle.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LongitudinalTrajectory {
    pub segments: Vec<TrajectorySegment>,
    pub t_pnr: Option<f64>,
    pub t_pga: Option<f64>,
}

impl LongitudinalTrajectory {
    pub fn from_segments(segments: Vec<TrajectorySegment>) -> Self {
        LongitudinalTrajectory {
            segments,
            t_pnr: None,
            t_pga: None,
        }
    }

    pub fn duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    pub fn start_state(&self) -> LongitudinalState {
        self.segments
            .first()
            .map(|s| s.state(0.0))
            .unwrap_or_default()
    }

    pub fn end_state(&self) -> LongitudinalState {
        self.segments
            .last()
            .map(|s| s.end_state())
            .unwrap_or_default()
    }

    /// Segment index and local time for `t`, clamped to the trajectory.
    fn locate(&self, t: f64) -> Option<(usize, f64)> {
        let mut t0 = 0.0;
        let n = self.segments.len();
        for (i, seg) in self.segments.iter().enumerate() {
            if t < t0 + seg.duration || i + 1 == n {
                return Some((i, (t - t0).clamp(0.0, seg.duration)));
            }
            t0 += seg.duration;
        }
        None
    }

    /// State at time `t`; beyond the end the final velocity is held with zero
    /// acceleration.
    pub fn state_at(&self, t: f64) -> LongitudinalState {
        let Some((i, tau)) = self.locate(t) else {
            return LongitudinalState::default();
        };
        let end = self.duration();
        if t > end {
            let e = self.end_state();
            let v = e.v.max(0.0);
            return LongitudinalState::new(e.s + v * (t - end), v, 0.0);
        }
        self.segments[i].state(tau)
    }

    pub fn jerk_at(&self, t: f64) -> f64 {
        if t > self.duration() {
            return 0.0;
        }
        match self.locate(t) {
            Some((i, tau)) => self.segments[i].jerk(tau),
            None => 0.0,
        }
    }

    pub fn jerk_cost(&self) -> f64 {
        self.segments.iter().map(|s| s.jerk_cost()).sum()
    }

    pub fn max_abs_jerk(&self) -> f64 {
        self.segments
            .iter()
            .map(|s| s.max_abs_jerk())
            .fold(0.0, f64::max)
    }

    /// Start times of each segment, plus the end time.
    pub fn knots(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.segments.len() + 1);
        let mut t = 0.0;
        out.push(t);
        for s in &self.segments {
            t += s.duration;
            out.push(t);
        }
        out
    }

    /// First time at which stopping at `a_min` no longer ends at or before
    /// `s_stop`, refined by bisection. `None` if it never happens.
    pub fn pnr_crossing(&self, s_stop: f64, a_min: f64, step: f64) -> Option<f64> {
        let g = |t: f64| self.state_at(t).stop_position(a_min) - s_stop;
        if g(0.0) > PNR_TOL {
            return Some(0.0);
        }
        let end = self.duration();
        let n = (end / step).ceil().max(1.0) as usize;
        let mut prev = 0.0;
        for k in 1..=n {
            let t = (k as f64 * step).min(end);
            if g(t) > PNR_TOL {
                let (mut lo, mut hi) = (prev, t);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if g(mid) > PNR_TOL {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                return Some(lo);
            }
            prev = t;
        }
        None
    }
}

/// Absolute tolerance on the stop-position test at a PNR.
pub const PNR_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub w_t: f64,
    pub w_tf: f64,
    pub scan_step: f64,
    /// Selection penalty added to candidates other than the carried-over
    /// previous winner.
    pub w_switch: f64,
    pub early_exit: bool,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            w_t: 1.0,
            w_tf: 0.05,
            scan_step: 0.05,
            w_switch: 0.05,
            early_exit: true,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.w_t != 1.0 {
            return Err(Error::invalid("w_t", "only w_t = 1 is supported"));
        }
        if !(self.w_tf >= 0.0) {
            return Err(Error::invalid("w_tf", "must be non-negative"));
        }
        if !(self.scan_step > 0.0) {
            return Err(Error::invalid("scan_step", "must be positive"));
        }
        if !(self.w_switch >= 0.0) {
            return Err(Error::invalid("w_switch", "must be non-negative"));
        }
        Ok(())
    }
}

pub fn solve_min_jerk_segment(
    x0: LongitudinalState,
    xf: LongitudinalState,
    dt: f64,
) -> Result<TrajectorySegment> {
    TrajectorySegment::min_jerk(x0, xf, dt)
}

/// Builds one segment per target and sets PNR/PGA times from marked targets.
pub fn assemble_candidate(
    x0: LongitudinalState,
    option: &BehaviorOption,
) -> Result<LongitudinalTrajectory> {
    let mut segments = Vec::with_capacity(option.targets.len());
    let mut state = x0;
    let mut t_prev = 0.0;
    let mut traj = LongitudinalTrajectory::default();
    for target in &option.targets {
        let dt = target.t_f - t_prev;
        let seg = match target.role {
            TargetRole::Brake => TrajectorySegment::constant_accel(state, target.a_f, dt)?,
            _ => TrajectorySegment::min_jerk(state, target.state(), dt)?,
        };
        match target.role {
            TargetRole::Pnr => traj.t_pnr = Some(target.t_f),
            TargetRole::Pga => traj.t_pga = Some(target.t_f),
            _ => {}
        }
        state = seg.end_state();
        segments.push(seg);
        t_prev = target.t_f;
    }
    if segments.is_empty() {
        return Err(Error::NonpositiveDuration(0.0));
    }
    traj.segments = segments;
    Ok(traj)
}

/// Sets the passageway annotation according to the option kind.
pub fn annotate(traj: &mut LongitudinalTrajectory, option: &BehaviorOption, ctx: &SituationContext, step: f64) {
    let end = traj.duration();
    let a_min = ctx.constraints.a_min;
    match option.kind {
        BehaviorKind::LaneFollow => {
            traj.t_pnr = Some(0.0);
            traj.t_pga = Some(0.0);
        }
        BehaviorKind::GentleStop | BehaviorKind::FollowThenStop | BehaviorKind::FailSafe => {
            let final_s = traj.end_state().s;
            match ctx.constraints.s_stop {
                Some(s_stop) if final_s > s_stop + PNR_TOL => {
                    traj.t_pnr = Some(traj.pnr_crossing(s_stop, a_min, step).unwrap_or(0.0));
                    traj.t_pga = Some(end);
                }
                _ => {
                    traj.t_pnr = Some(end);
                    traj.t_pga = Some(end);
                }
            }
        }
        BehaviorKind::MergeDynamic | BehaviorKind::FollowThenMerge => {
            if let Some(s_stop) = ctx.constraints.s_stop {
                let crossing = traj.pnr_crossing(s_stop, a_min, step);
                let t = match (traj.t_pnr, crossing) {
                    (Some(a), Some(b)) => Some(a.min(b)),
                    (a, b) => a.or(b),
                };
                traj.t_pnr = t.or(traj.t_pga);
            } else if traj.t_pnr.is_none() {
                traj.t_pnr = Some(0.0);
            }
        }
    }
}

/// Dense scan of the acceleration and velocity constraints.
pub fn check_constraints(traj: &LongitudinalTrajectory, ctx: &SituationContext) -> bool {
    check_constraints_with(traj, ctx, PlannerConfig::default().scan_step, true)
}

const CONSTRAINT_TOL: f64 = 1e-6;

fn check_constraints_with(
    traj: &LongitudinalTrajectory,
    ctx: &SituationContext,
    step: f64,
    with_speed_limit: bool,
) -> bool {
    first_violation(traj, ctx, step, with_speed_limit).is_none()
}

/// Time and description of the first scanned constraint violation.
pub fn first_violation(
    traj: &LongitudinalTrajectory,
    ctx: &SituationContext,
    step: f64,
    with_speed_limit: bool,
) -> Option<(f64, &'static str)> {
    let c = &ctx.constraints;
    let end = traj.duration();
    let n = (end / step).ceil().max(1.0) as usize;
    for k in 0..=n {
        let t = (k as f64 * step).min(end);
        let x = traj.state_at(t);
        if x.a < c.a_min - CONSTRAINT_TOL {
            return Some((t, "deceleration limit"));
        }
        if x.a > c.a_max + CONSTRAINT_TOL {
            return Some((t, "acceleration limit"));
        }
        if x.v < -CONSTRAINT_TOL {
            return Some((t, "reverse motion"));
        }
        if with_speed_limit && x.v > ctx.v_max(x.s, t) + CONSTRAINT_TOL {
            return Some((t, "speed limit"));
        }
    }
    None
}

/// Stopping at `a_min` from any scanned state before the PNR ends at or
/// before `s_stop`.
pub fn check_pnr_consistency(traj: &LongitudinalTrajectory, s_stop: f64, a_min: f64, step: f64) -> bool {
    let Some(t_pnr) = traj.t_pnr else {
        return false;
    };
    if t_pnr <= 0.0 {
        return true;
    }
    let n = (t_pnr / step).floor() as usize;
    (0..=n)
        .map(|k| (k as f64 * step).min(t_pnr))
        .chain(core::iter::once(t_pnr))
        .all(|t| traj.state_at(t).stop_position(a_min) <= s_stop + PNR_TOL)
}

/// `J∥`: jerk integral, duration penalty per segment, plus residual risk.
pub fn trajectory_cost(traj: &LongitudinalTrajectory, p_risk: f64, cfg: &PlannerConfig) -> f64 {
    let time: f64 = traj
        .segments
        .iter()
        .map(|s| cfg.w_tf * s.duration * s.duration)
        .sum();
    traj.jerk_cost() + time + p_risk
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub index: usize,
    pub kind: BehaviorKind,
    pub importance: u32,
    pub seeded: bool,
    pub valid: bool,
    pub reason: Option<String>,
    pub cost: f64,
    pub selection_cost: f64,
    pub p_risk: f64,
    pub t_pnr: Option<f64>,
    pub t_pga: Option<f64>,
    pub durations: Vec<f64>,
    pub coeffs: Vec<[f64; 6]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutcome {
    pub trajectory: LongitudinalTrajectory,
    pub option: BehaviorOption,
    pub cost: f64,
    pub p_risk: f64,
    pub candidates: Vec<CandidateRecord>,
}

impl PlanOutcome {
    pub fn winner(&self) -> Option<&CandidateRecord> {
        self.candidates
            .iter()
            .filter(|c| c.valid)
            .min_by(|a, b| compare_selection(a, b))
    }
}

fn compare_selection(a: &CandidateRecord, b: &CandidateRecord) -> core::cmp::Ordering {
    a.selection_cost
        .total_cmp(&b.selection_cost)
        .then_with(|| {
            let ta = a.t_pga.unwrap_or(f64::INFINITY);
            let tb = b.t_pga.unwrap_or(f64::INFINITY);
            ta.total_cmp(&tb)
        })
        .then_with(|| a.index.cmp(&b.index))
}

struct Evaluated {
    traj: LongitudinalTrajectory,
    record: CandidateRecord,
}

fn evaluate_option(
    index: usize,
    option: &BehaviorOption,
    ctx: &SituationContext,
    x0: LongitudinalState,
    objects: &[ObjectPrediction],
    p_rel: f64,
    cfg: &PlannerConfig,
) -> Evaluated {
    let mut record = CandidateRecord {
        index,
        kind: option.kind,
        importance: option.importance,
        seeded: option.seeded,
        valid: false,
        reason: None,
        cost: f64::INFINITY,
        selection_cost: f64::INFINITY,
        p_risk: 1.0,
        t_pnr: None,
        t_pga: None,
        durations: Vec::new(),
        coeffs: Vec::new(),
    };
    let mut traj = match assemble_candidate(x0, option) {
        Ok(t) => t,
        Err(e) => {
            record.reason = Some(alloc::format!("{e}"));
            return Evaluated {
                traj: LongitudinalTrajectory::default(),
                record,
            };
        }
    };
    annotate(&mut traj, option, ctx, cfg.scan_step);
    record.t_pnr = traj.t_pnr;
    record.t_pga = traj.t_pga;
    record.durations = traj.segments.iter().map(|s| s.duration).collect();
    record.coeffs = traj.segments.iter().map(|s| s.coeffs).collect();

    let p_risk = match aggregate_risk(&traj, objects, &ctx.assumptions.risk, p_rel) {
        Ok(p) => p,
        Err(e) => {
            record.reason = Some(alloc::format!("{e}"));
            return Evaluated { traj, record };
        }
    };
    record.p_risk = p_risk;
    let cost = trajectory_cost(&traj, p_risk, cfg);
    record.cost = cost;
    record.selection_cost = if option.seeded { cost } else { cost + cfg.w_switch };

    let fail_safe = option.kind == BehaviorKind::FailSafe;
    if let Some((t, what)) = first_violation(&traj, ctx, cfg.scan_step, !fail_safe) {
        record.reason = Some(alloc::format!("{what} at t = {t:.2}"));
        return Evaluated { traj, record };
    }
    if let (Some(t_pnr), Some(t_pga)) = (traj.t_pnr, traj.t_pga) {
        if !fail_safe && t_pnr < t_pga && p_risk > ctx.constraints.p_risk_max {
            record.reason = Some("residual risk above threshold".into());
            return Evaluated { traj, record };
        }
    }
    if let Some(s_stop) = ctx.constraints.s_stop {
        if !fail_safe && !check_pnr_consistency(&traj, s_stop, ctx.constraints.a_min, cfg.scan_step) {
            record.reason = Some("passes the point of no return early".into());
            return Evaluated { traj, record };
        }
    }
    record.valid = true;
    Evaluated { traj, record }
}

/// Evaluates the options in importance order and returns the cheapest
/// admissible candidate, stopping once a lower importance class is reached
/// with a solution at hand.
pub fn plan(
    ctx: &SituationContext,
    x0: LongitudinalState,
    objects: &[ObjectPrediction],
    p_rel: f64,
    cfg: &PlannerConfig,
) -> Result<PlanOutcome> {
    let options = &ctx.behaviors;
    let mut candidates = Vec::with_capacity(options.len());
    let mut best: Option<(usize, LongitudinalTrajectory)> = None;
    for (i, option) in options.iter().enumerate() {
        if cfg.early_exit && best.is_some() && i > 0 && option.importance < options[i - 1].importance {
            break;
        }
        let ev = evaluate_option(i, option, ctx, x0, objects, p_rel, cfg);
        if ev.record.valid {
            let better = match &best {
                None => true,
                Some((j, _)) => {
                    let cur: &CandidateRecord = &candidates[*j];
                    compare_selection(&ev.record, cur).is_lt()
                }
            };
            if better {
                best = Some((candidates.len(), ev.traj));
            }
        }
        candidates.push(ev.record);
    }
    let Some((j, trajectory)) = best else {
        let reason = candidates
            .iter()
            .rev()
            .find(|c| c.kind == BehaviorKind::FailSafe)
            .and_then(|c| c.reason.clone())
            .unwrap_or_else(|| "no fail-safe option in the behavior list".into());
        return Err(Error::Infeasible(reason));
    };
    let record = &candidates[j];
    Ok(PlanOutcome {
        option: options[record.index].clone(),
        cost: record.cost,
        p_risk: record.p_risk,
        trajectory,
        candidates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn st(s: f64, v: f64, a: f64) -> LongitudinalState {
        LongitudinalState::new(s, v, a)
    }

    #[test]
    fn rest_to_rest_quintic() {
        let seg = TrajectorySegment::min_jerk(st(0.0, 0.0, 0.0), st(100.0, 0.0, 0.0), 10.0).unwrap();
        for k in 0..=20 {
            let t = k as f64 * 0.5;
            let tau = t / 10.0;
            let expect = 100.0 * (10.0 * tau.powi(3) - 15.0 * tau.powi(4) + 6.0 * tau.powi(5));
            assert!((seg.state(t).s - expect).abs() < 1e-9);
        }
        assert!((seg.state(5.0).v - 18.75).abs() < 1e-12);
        // 360 D² / T⁵ with D = 100, T = 10
        assert!((seg.jerk_cost() - 36.0).abs() < 1e-9);
        // 60 D / T³
        assert!((seg.max_abs_jerk() - 6.0).abs() < 1e-12);
        // 10 D / (√3 T²)
        let peak_a = (0..=10_000)
            .map(|k| seg.state(k as f64 * 1e-3).a.abs())
            .fold(0.0, f64::max);
        assert!((peak_a - 10.0 * 100.0 / (3.0f64.sqrt() * 100.0)).abs() < 1e-4);
    }

    #[test]
    fn trivial_segments_cost_nothing() {
        let v = 7.0;
        let seg = TrajectorySegment::min_jerk(st(0.0, v, 0.0), st(v * 3.0, v, 0.0), 3.0).unwrap();
        assert!(seg.jerk_cost().abs() < 1e-20);
        let null = TrajectorySegment::min_jerk(st(0.0, 0.0, 0.0), st(0.0, 0.0, 0.0), 1.0).unwrap();
        assert!(null.coeffs.iter().all(|c| *c == 0.0));
        assert_eq!(
            TrajectorySegment::min_jerk(st(0.0, 0.0, 0.0), st(1.0, 0.0, 0.0), 0.0),
            Err(Error::NonpositiveDuration(0.0))
        );
    }

    #[test]
    fn cost_examples() {
        let seg = TrajectorySegment::min_jerk(st(0.0, 0.0, 0.0), st(100.0, 0.0, 0.0), 10.0).unwrap();
        let traj = LongitudinalTrajectory::from_segments(alloc::vec![seg]);
        let cfg = PlannerConfig { w_tf: 0.01, ..PlannerConfig::default() };
        assert!((trajectory_cost(&traj, 0.0, &cfg) - 37.0).abs() < 1e-9);

        let null = TrajectorySegment::min_jerk(st(0.0, 0.0, 0.0), st(0.0, 0.0, 0.0), 1.0).unwrap();
        let zero = LongitudinalTrajectory::from_segments(alloc::vec![null]);
        let cfg0 = PlannerConfig { w_tf: 0.0, ..PlannerConfig::default() };
        assert_eq!(trajectory_cost(&zero, 0.25, &cfg0), 0.25);

        let seg2 = TrajectorySegment::min_jerk(st(100.0, 0.0, 0.0), st(200.0, 0.0, 0.0), 10.0).unwrap();
        let two = LongitudinalTrajectory::from_segments(alloc::vec![seg, seg2]);
        assert!((trajectory_cost(&two, 0.1, &cfg) - (2.0 * 37.0 + 0.1)).abs() < 1e-9);
    }

    #[test]
    fn trajectory_extrapolates_and_locates() {
        let a = TrajectorySegment::min_jerk(st(0.0, 5.0, 0.0), st(10.0, 5.0, 0.0), 2.0).unwrap();
        let b = TrajectorySegment::min_jerk(a.end_state(), st(20.0, 5.0, 0.0), 2.0).unwrap();
        let traj = LongitudinalTrajectory::from_segments(alloc::vec![a, b]);
        assert!((traj.state_at(3.0).s - 15.0).abs() < 1e-9);
        assert!((traj.state_at(6.0).s - 30.0).abs() < 1e-9);
        assert_eq!(traj.knots(), alloc::vec![0.0, 2.0, 4.0]);
    }

    #[test]
    fn pnr_crossing_of_constant_speed() {
        let seg = TrajectorySegment::min_jerk(st(0.0, 4.0, 0.0), st(40.0, 4.0, 0.0), 10.0).unwrap();
        let traj = LongitudinalTrajectory::from_segments(alloc::vec![seg]);
        // stop distance 2 m at a_min = -4: crossing where s = 18
        let t = traj.pnr_crossing(20.0, -4.0, 0.05).unwrap();
        assert!((t - 4.5).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn boundary_conditions_hold(
            s0 in -50.0f64..50.0, v0 in 0.0f64..15.0, a0 in -4.0f64..4.0,
            ds in 0.0f64..100.0, vf in 0.0f64..15.0, af in -4.0f64..4.0,
            dt in 1.0f64..10.0,
        ) {
            let x0 = st(s0, v0, a0);
            let xf = st(s0 + ds, vf, af);
            let seg = TrajectorySegment::min_jerk(x0, xf, dt).unwrap();
            let b = seg.state(0.0);
            let e = seg.end_state();
            let tol = |x: f64| 1e-9 * (1.0 + x.abs());
            prop_assert!((b.s - x0.s).abs() <= tol(x0.s));
            prop_assert!((b.v - x0.v).abs() <= tol(x0.v));
            prop_assert!((b.a - x0.a).abs() <= tol(x0.a));
            prop_assert!((e.s - xf.s).abs() <= 1e-8 * (1.0 + xf.s.abs()));
            prop_assert!((e.v - xf.v).abs() <= 1e-8 * (1.0 + xf.v.abs()));
            prop_assert!((e.a - xf.a).abs() <= 1e-8 * (1.0 + xf.a.abs()));
        }

        #[test]
        fn closed_form_cost_matches_quadrature(
            v0 in 0.0f64..15.0, a0 in -4.0f64..4.0, ds in 0.0f64..100.0,
            vf in 0.0f64..15.0, af in -4.0f64..4.0, dt in 1.0f64..10.0,
        ) {
            let seg = TrajectorySegment::min_jerk(st(0.0, v0, a0), st(ds, vf, af), dt).unwrap();
            let n = 2000;
            let h = dt / n as f64;
            let mut acc = 0.0;
            for k in 0..=n {
                let w = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
                acc += w * seg.jerk(k as f64 * h).powi(2);
            }
            let quad = 0.5 * acc * h / 3.0;
            prop_assert!((quad - seg.jerk_cost()).abs() <= 1e-9 * (1.0 + quad.abs()) + 1e-12 * dt.powi(5));
        }
    }
}
