//! Situation contexts: constraints, regularizing assumptions and timed
//! behavior options along the route.

use alloc::string::ToString;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PathRef, Polygon};
use crate::planner::LongitudinalState;
use crate::risk::{LaneId, ObjectId, ObjectPrediction, RiskConfig, Source};

/// Piecewise-constant function of arc length. `values[i]` holds on
/// `[breaks[i], breaks[i + 1])`; the first and last values extend outward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedProfile {
    pub breaks: Vec<f64>,
    pub values: Vec<f64>,
}

impl SpeedProfile {
    pub fn constant(v: f64) -> Self {
        SpeedProfile {
            breaks: alloc::vec![0.0],
            values: alloc::vec![v],
        }
    }

    pub fn at(&self, s: f64) -> f64 {
        let i = self.breaks.partition_point(|b| *b <= s);
        self.values[i.saturating_sub(1).min(self.values.len() - 1)]
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Smallest value attained on `[a, b]`.
    pub fn min_over(&self, a: f64, b: f64) -> f64 {
        let mut m = self.at(a).min(self.at(b));
        for (i, &br) in self.breaks.iter().enumerate() {
            if br > a && br < b {
                m = m.min(self.values[i]);
            }
        }
        m
    }

    /// Constant pieces as `(start, end, value)`, merged where equal.
    pub fn pieces(&self, end: f64) -> Vec<(f64, f64, f64)> {
        let mut out: Vec<(f64, f64, f64)> = Vec::new();
        for (i, &v) in self.values.iter().enumerate() {
            let a = self.breaks[i];
            let b = self.breaks.get(i + 1).copied().unwrap_or(end);
            match out.last_mut() {
                Some(last) if last.2 == v => last.1 = b,
                _ => out.push((a, b, v)),
            }
        }
        out
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        if self.breaks.is_empty() || self.breaks.len() != self.values.len() {
            return Err(Error::invalid(field, "breaks and values must be non-empty and of equal length"));
        }
        if self.breaks.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid(field, "breaks must be strictly increasing"));
        }
        if self.values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid(field, "values must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    pub v_sl: SpeedProfile,
    pub a_min: f64,
    pub a_max: f64,
    pub a_perp_max: f64,
    pub v_max_profile: SpeedProfile,
    /// Yield line; absent in contexts without a rule change.
    pub s_stop: Option<f64>,
    pub t_pred: f64,
    pub p_risk_max: f64,
}

/// Time-dependent restriction behind a lead vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicSpeedLimit {
    pub lead: ObjectId,
    pub s0: f64,
    pub v: f64,
    pub margin: f64,
}

impl DynamicSpeedLimit {
    /// Start of the restricted zone at time `t`.
    pub fn zone_start(&self, t: f64) -> f64 {
        self.s0 + self.v * t - self.margin
    }

    pub fn apply(&self, static_v: f64, s: f64, t: f64) -> f64 {
        if s < self.zone_start(t) {
            static_v
        } else {
            static_v.min(self.v.max(0.0))
        }
    }
}

/// Restricts `v_max` behind `lead` with constant safety distance `s_plus`.
pub fn dynamic_speed_limit(lead: &ObjectPrediction, s_plus: f64) -> DynamicSpeedLimit {
    DynamicSpeedLimit {
        lead: lead.id,
        s0: lead.s0,
        v: lead.v,
        margin: s_plus,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RationalDriver {
    pub lane: LaneId,
    pub assumed: bool,
}

/// Objects on `lane` at or beyond `from_s` share the ego's path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SharedLane {
    pub lane: LaneId,
    pub from_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegularizingAssumptions {
    pub priority_lane_polygons: Vec<Polygon>,
    pub fov_polygons: Vec<Polygon>,
    pub rational_driver: Vec<RationalDriver>,
    pub risk: RiskConfig,
    pub curve_constant_speed: bool,
    pub ego_lane: LaneId,
    pub shared_lane: Option<SharedLane>,
}

impl Default for RegularizingAssumptions {
    fn default() -> Self {
        RegularizingAssumptions {
            priority_lane_polygons: Vec::new(),
            fov_polygons: Vec::new(),
            rational_driver: Vec::new(),
            risk: RiskConfig::default(),
            curve_constant_speed: true,
            ego_lane: LaneId(0),
            shared_lane: None,
        }
    }
}

impl RegularizingAssumptions {
    pub fn validate(&self) -> Result<()> {
        for p in self.priority_lane_polygons.iter().chain(&self.fov_polygons) {
            if !p.is_simple() {
                return Err(Error::invalid("polygons", "polygons must be simple"));
            }
        }
        self.risk.validate()
    }

    pub fn assumes_rational(&self, lane: LaneId) -> bool {
        self.rational_driver
            .iter()
            .any(|r| r.lane == lane && r.assumed)
    }

    /// True when the object travels on the ego's path.
    pub fn on_ego_path(&self, obj: &ObjectPrediction) -> bool {
        obj.lane == self.ego_lane
            || self
                .shared_lane
                .is_some_and(|sh| obj.lane == sh.lane && obj.s0 >= sh.from_s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetRole {
    Plain,
    Pnr,
    CurveExit,
    Pga,
    Stop,
    Follow,
    Boundary,
    /// Entry or exit of a slower stretch of the speed limit profile.
    SpeedLimit,
    /// Reached by constant acceleration `a_f` instead of a quintic.
    Brake,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetState {
    pub s_f: f64,
    pub v_f: f64,
    pub a_f: f64,
    pub t_f: f64,
    pub role: TargetRole,
}

impl TargetState {
    pub fn new(s_f: f64, v_f: f64, a_f: f64, t_f: f64, role: TargetRole) -> Self {
        TargetState { s_f, v_f, a_f, t_f, role }
    }

    pub fn state(&self) -> LongitudinalState {
        LongitudinalState::new(self.s_f, self.v_f, self.a_f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BehaviorKind {
    MergeDynamic,
    FollowThenMerge,
    FollowThenStop,
    GentleStop,
    FailSafe,
    LaneFollow,
}

impl BehaviorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BehaviorKind::MergeDynamic => "merge_dynamic",
            BehaviorKind::FollowThenMerge => "follow_then_merge",
            BehaviorKind::FollowThenStop => "follow_then_stop",
            BehaviorKind::GentleStop => "gentle_stop",
            BehaviorKind::FailSafe => "fail_safe",
            BehaviorKind::LaneFollow => "lane_follow",
        }
    }

    pub fn is_stop(self) -> bool {
        matches!(
            self,
            BehaviorKind::GentleStop | BehaviorKind::FollowThenStop | BehaviorKind::FailSafe
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorOption {
    /// Index of the reference path in the scenario.
    pub path: usize,
    pub targets: Vec<TargetState>,
    pub importance: u32,
    pub kind: BehaviorKind,
    /// Carried over from the previous cycle.
    #[serde(default)]
    pub seeded: bool,
}

impl BehaviorOption {
    pub fn new(kind: BehaviorKind, importance: u32, targets: Vec<TargetState>) -> Self {
        BehaviorOption {
            path: 0,
            targets,
            importance,
            kind,
            seeded: false,
        }
    }

    pub fn final_target(&self) -> Option<&TargetState> {
        self.targets.last()
    }

    pub fn t_pga(&self) -> Option<f64> {
        self.targets
            .iter()
            .find(|t| t.role == TargetRole::Pga)
            .map(|t| t.t_f)
    }

    /// Drops targets the ego has passed and shifts the rest by `elapsed`.
    pub fn advance(&self, ego_s: f64, elapsed: f64) -> Option<BehaviorOption> {
        let targets: Vec<TargetState> = self
            .targets
            .iter()
            .filter(|t| t.t_f - elapsed > 1e-6 && t.s_f >= ego_s - 1e-9)
            .map(|t| TargetState { t_f: t.t_f - elapsed, ..*t })
            .collect();
        if targets.is_empty() {
            return None;
        }
        Some(BehaviorOption {
            targets,
            seeded: true,
            ..self.clone()
        })
    }

    pub fn is_well_formed(&self) -> bool {
        !self.targets.is_empty()
            && self.targets[0].t_f > 0.0
            && self.targets.windows(2).all(|w| w[0].t_f < w[1].t_f)
            && self.targets.iter().all(|t| t.v_f >= 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextKind {
    Free,
    Merge,
}

/// Static geometry of a merge context.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergeGeometry {
    pub s_stop: f64,
    pub s_pga: f64,
    pub s_curve_exit: f64,
    pub v_curve: f64,
    pub v_yield: f64,
    /// Conflict point in the common lane coordinate.
    pub s_conflict: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SituationContext {
    pub interval: [f64; 2],
    /// The last context includes its upper bound.
    pub closed: bool,
    pub kind: ContextKind,
    pub constraints: ConstraintSet,
    pub assumptions: RegularizingAssumptions,
    pub behaviors: Vec<BehaviorOption>,
    pub s_pga: Option<f64>,
    pub merge: Option<MergeGeometry>,
    pub dynamic: Option<DynamicSpeedLimit>,
    /// Speed at the upper boundary admissible in both neighbors.
    pub boundary_speed: Option<f64>,
}

impl SituationContext {
    pub fn contains(&self, s: f64) -> bool {
        s >= self.interval[0] && (s < self.interval[1] || (self.closed && s <= self.interval[1]))
    }

    pub fn static_v_max(&self, s: f64) -> f64 {
        self.constraints.v_max_profile.at(s)
    }

    pub fn v_max(&self, s: f64, t: f64) -> f64 {
        let v = self.static_v_max(s);
        match &self.dynamic {
            Some(d) => d.apply(v, s, t),
            None => v,
        }
    }
}

/// Junction rule on the route.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JunctionRule {
    pub s_stop: f64,
    pub s_pga: f64,
    /// Conflict point in the common lane coordinate; defaults to `s_stop`.
    #[serde(default)]
    pub s_conflict: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapRules {
    pub v_sl: SpeedProfile,
    pub junctions: Vec<JunctionRule>,
    pub a_min: f64,
    pub a_max: f64,
    pub a_perp_max: f64,
    pub t_pred: f64,
    pub p_risk_max: f64,
}

impl MapRules {
    pub fn validate(&self) -> Result<()> {
        self.v_sl.validate("v_sl")?;
        if !(self.a_min < 0.0) {
            return Err(Error::invalid("a_min", "must be negative"));
        }
        if !(self.a_max > 0.0) {
            return Err(Error::invalid("a_max", "must be positive"));
        }
        if !(self.a_perp_max > 0.0) {
            return Err(Error::invalid("a_perp_max", "must be positive"));
        }
        if !(self.t_pred > 0.0) {
            return Err(Error::invalid("T_pred", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.p_risk_max) {
            return Err(Error::invalid("p_risk_max", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// `v_max(s) = min(v_sl(s), sqrt(a⊥,max / |κ(s)|))` at every path sample.
pub fn speed_limit_profile(path: &PathRef, v_sl: &SpeedProfile, a_perp_max: f64) -> SpeedProfile {
    let mut breaks = Vec::with_capacity(path.samples().len());
    let mut values = Vec::with_capacity(path.samples().len());
    for p in path.samples() {
        let curve = if p.kappa == 0.0 {
            f64::INFINITY
        } else {
            (a_perp_max / p.kappa.abs()).sqrt()
        };
        breaks.push(p.s);
        values.push(v_sl.at(p.s).min(curve));
    }
    SpeedProfile { breaks, values }
}

/// Curvature below which a sample counts as straight.
pub const STRAIGHT_KAPPA: f64 = 1e-3;

/// Curve segments as `(start, end, peak |κ|)`, split at sign changes and at
/// pronounced local minima of `|κ|`.
pub fn curve_segments(path: &PathRef) -> Vec<(f64, f64, f64)> {
    let samples = path.samples();
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut start: Option<usize> = None;
    for (i, p) in samples.iter().enumerate() {
        let curved = p.kappa.abs() > STRAIGHT_KAPPA;
        let sign_change = start.is_some_and(|j| samples[j].kappa.signum() != p.kappa.signum());
        match (start, curved) {
            (None, true) => start = Some(i),
            (Some(j), true) if sign_change => {
                runs.push((j, i - 1));
                start = Some(i);
            }
            (Some(j), false) => {
                runs.push((j, i - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(j) = start {
        runs.push((j, samples.len() - 1));
    }
    let mut out = Vec::new();
    for (a, b) in runs {
        // split at local minima well below both neighbouring peaks
        let mut seg_start = a;
        let mut i = a + 1;
        while i < b {
            let k = samples[i].kappa.abs();
            let is_min = k <= samples[i - 1].kappa.abs() && k < samples[i + 1].kappa.abs();
            if is_min {
                let left = samples[seg_start..=i].iter().map(|p| p.kappa.abs()).fold(0.0, f64::max);
                let right = samples[i..=b].iter().map(|p| p.kappa.abs()).fold(0.0, f64::max);
                if k < 0.5 * left.min(right) {
                    out.push((seg_start, i));
                    seg_start = i;
                }
            }
            i += 1;
        }
        out.push((seg_start, b));
    }
    out.into_iter()
        .map(|(a, b)| {
            let peak = samples[a..=b].iter().map(|p| p.kappa.abs()).fold(0.0, f64::max);
            (samples[a].s, samples[b].s, peak)
        })
        .collect()
}

/// Replaces `v_max` by one constant per curve segment (the value at its
/// smallest radius) and by the straight-road value in between.
pub fn segmentwise_constant_approximation(v_max: &SpeedProfile, path: &PathRef) -> SpeedProfile {
    let total = path.total_length();
    let pieces = v_max.pieces(total);
    let straight_value = |a: f64, b: f64| {
        pieces
            .iter()
            .filter(|p| p.1 > a && p.0 < b)
            .map(|p| p.2)
            .fold(0.0, f64::max)
    };
    let mut spans: Vec<(f64, f64)> = Vec::new();
    let mut cursor = 0.0;
    for (a, b, _) in curve_segments(path) {
        if a > cursor {
            spans.push((cursor, straight_value(cursor, a)));
        }
        spans.push((a, v_max.min_over(a, b)));
        cursor = b;
    }
    if cursor < total || spans.is_empty() {
        spans.push((cursor, straight_value(cursor, total.max(cursor + 1e-9))));
    }
    let mut out = SpeedProfile {
        breaks: Vec::new(),
        values: Vec::new(),
    };
    for (b, v) in spans {
        if out.values.last() == Some(&v) {
            continue;
        }
        if out.breaks.last().is_some_and(|x| *x >= b) {
            out.breaks.pop();
            out.values.pop();
        }
        out.breaks.push(b);
        out.values.push(v);
    }
    out
}

/// `s_stop − v² / (2|a_min|)`.
pub fn compute_pnr(v: f64, a_min: f64, s_stop: f64) -> f64 {
    s_stop - v * v / (2.0 * a_min.abs())
}

/// Travel time from `s` to `s_end` at the profile speed.
fn travel_time(profile: &SpeedProfile, s: f64, s_end: f64) -> f64 {
    let mut t = 0.0;
    for (a, b, v) in profile.pieces(f64::INFINITY) {
        let lo = a.max(s);
        let hi = b.min(s_end);
        if hi > lo {
            if v <= 0.0 {
                return f64::INFINITY;
            }
            t += (hi - lo) / v;
        }
    }
    t
}

/// Smallest `s ≥ lower` from which `s_end` is reached within `horizon`.
fn reachable_start(profile: &SpeedProfile, lower: f64, s_end: f64, horizon: f64) -> f64 {
    if travel_time(profile, lower, s_end) <= horizon {
        return lower;
    }
    let (mut lo, mut hi) = (lower, s_end);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if travel_time(profile, mid, s_end) <= horizon {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

fn fail_safe_template() -> BehaviorOption {
    BehaviorOption::new(
        BehaviorKind::FailSafe,
        0,
        alloc::vec![TargetState::new(0.0, 0.0, 0.0, 1.0, TargetRole::Brake)],
    )
}

/// Splits the route into contexts on which rules are constant.
pub fn precompute_contexts(
    route: &PathRef,
    rules: &MapRules,
    assumptions: &RegularizingAssumptions,
) -> Result<Vec<SituationContext>> {
    rules.validate()?;
    assumptions.validate()?;
    let total = route.total_length();
    let raw = speed_limit_profile(route, &rules.v_sl, rules.a_perp_max);
    let v_max = if assumptions.curve_constant_speed {
        segmentwise_constant_approximation(&raw, route)
    } else {
        raw
    };
    let curves = curve_segments(route);
    let mut junctions = rules.junctions.clone();
    junctions.sort_by(|a, b| a.s_stop.total_cmp(&b.s_stop));
    for j in &junctions {
        if !(j.s_stop >= 0.0 && j.s_stop <= total) {
            return Err(Error::InconsistentRules(alloc::format!(
                "yield line at {:.2} m lies outside the route [0, {:.2}]",
                j.s_stop, total
            )));
        }
        if !(j.s_pga > j.s_stop && j.s_pga <= total) {
            return Err(Error::InconsistentRules(alloc::format!(
                "point of guaranteed arrival at {:.2} m must lie after the yield line and on the route",
                j.s_pga
            )));
        }
    }
    for w in junctions.windows(2) {
        if w[1].s_stop < w[0].s_pga {
            return Err(Error::InconsistentRules("junction rule intervals overlap".to_string()));
        }
    }

    let base = ConstraintSet {
        v_sl: rules.v_sl.clone(),
        a_min: rules.a_min,
        a_max: rules.a_max,
        a_perp_max: rules.a_perp_max,
        v_max_profile: v_max.clone(),
        s_stop: None,
        t_pred: rules.t_pred,
        p_risk_max: rules.p_risk_max,
    };
    let free = |a: f64, b: f64, closed: bool| SituationContext {
        interval: [a, b],
        closed,
        kind: ContextKind::Free,
        constraints: base.clone(),
        assumptions: assumptions.clone(),
        behaviors: alloc::vec![fail_safe_template()],
        s_pga: None,
        merge: None,
        dynamic: None,
        boundary_speed: None,
    };

    let mut out: Vec<SituationContext> = Vec::new();
    let mut prev_end = 0.0;
    for j in &junctions {
        let start = reachable_start(&v_max, prev_end, j.s_pga, rules.t_pred);
        if start > prev_end {
            let mut c = free(prev_end, start, false);
            c.boundary_speed = Some(v_max.at(start).min(v_max.at(start - 1e-9)));
            out.push(c);
        }
        let (s_exit, v_curve) = curves
            .iter()
            .filter(|c| c.1 <= j.s_pga && c.1 > j.s_stop - 1e-9)
            .last()
            .map(|c| (c.1, v_max.min_over(c.0, c.1)))
            .unwrap_or((j.s_stop, v_max.min_over(j.s_stop, j.s_pga)));
        let v_yield = v_max.at(j.s_stop).min(v_max.at(j.s_stop - 1e-9));
        let mut constraints = base.clone();
        constraints.s_stop = Some(j.s_stop);
        out.push(SituationContext {
            interval: [start, j.s_pga],
            closed: false,
            kind: ContextKind::Merge,
            constraints,
            assumptions: assumptions.clone(),
            behaviors: alloc::vec![fail_safe_template()],
            s_pga: Some(j.s_pga),
            merge: Some(MergeGeometry {
                s_stop: j.s_stop,
                s_pga: j.s_pga,
                s_curve_exit: s_exit.max(j.s_stop),
                v_curve: v_curve.min(v_yield.max(v_curve)),
                v_yield,
                s_conflict: j.s_conflict.unwrap_or(j.s_stop),
            }),
            dynamic: None,
            boundary_speed: Some(v_max.at(j.s_pga).min(v_max.at(j.s_pga - 1e-9))),
        });
        prev_end = j.s_pga;
    }
    if prev_end < total || out.is_empty() {
        out.push(free(prev_end, total, true));
    } else if let Some(last) = out.last_mut() {
        last.closed = true;
    }
    Ok(out)
}

/// Threshold on the speed ratio beyond which an object clearly violates the
/// traffic rules.
pub const VIOLATION_SPEED_RATIO: f64 = 1.3;

pub fn violates_rules(obj: &ObjectPrediction, v_sl: f64) -> bool {
    obj.v > VIOLATION_SPEED_RATIO * v_sl || obj.v < -0.5
}

/// Nearest object ahead on the ego path.
pub fn find_lead<'a>(
    assumptions: &RegularizingAssumptions,
    ego: &LongitudinalState,
    objects: &'a [ObjectPrediction],
) -> Option<&'a ObjectPrediction> {
    objects
        .iter()
        .filter(|o| o.source != Source::Virtual && assumptions.on_ego_path(o) && o.s0 > ego.s)
        .min_by(|a, b| a.s0.total_cmp(&b.s0).then(a.id.cmp(&b.id)))
}

/// Selects the context containing the ego and adapts it to the current
/// objects.
pub fn select_and_update_context(
    contexts: &[SituationContext],
    ego: &LongitudinalState,
    objects: &[ObjectPrediction],
) -> Result<SituationContext> {
    let ctx = contexts
        .iter()
        .find(|c| c.contains(ego.s))
        .ok_or(Error::NoContext(ego.s))?;
    let mut ctx = ctx.clone();
    let v_sl = ctx.constraints.v_sl.max_value();
    for r in ctx.assumptions.rational_driver.iter_mut() {
        if r.assumed && objects.iter().any(|o| o.lane == r.lane && violates_rules(o, v_sl)) {
            r.assumed = false;
        }
    }
    ctx.dynamic = find_lead(&ctx.assumptions, ego, objects).map(|lead| {
        let s_plus = ctx.assumptions.risk.s_plus(ego.v, lead.v);
        dynamic_speed_limit(lead, s_plus)
    });
    ctx.behaviors.retain(|b| b.is_well_formed());
    Ok(ctx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub v_pnr_min: f64,
    pub v_pnr_step: f64,
    /// Spacing of the absolute-time lattice for arrival times.
    pub t_lattice: f64,
    pub gap_delta: f64,
    pub min_gap: f64,
    /// Window of arrival times relative to the natural approach time.
    pub approach_window: [f64; 2],
    pub seed_offsets: Vec<f64>,
    pub stop_factors: Vec<f64>,
    pub cruise_durations: Vec<f64>,
    pub follow_times: Vec<f64>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            v_pnr_min: 1.0,
            v_pnr_step: 0.5,
            t_lattice: 0.25,
            gap_delta: 0.5,
            min_gap: 1.0,
            approach_window: [0.6, 3.0],
            seed_offsets: alloc::vec![-0.1, -0.05, 0.05, 0.1],
            stop_factors: alloc::vec![0.8, 0.9, 1.0, 1.15, 1.3],
            cruise_durations: alloc::vec![4.0, 5.0, 6.0, 8.0],
            follow_times: alloc::vec![2.0, 3.0, 4.5, 6.0],
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_pnr_min > 0.0) {
            return Err(Error::invalid("v_pnr_min", "must be positive"));
        }
        if !(self.v_pnr_step > 0.0) {
            return Err(Error::invalid("v_pnr_step", "must be positive"));
        }
        if !(self.t_lattice > 0.0) {
            return Err(Error::invalid("t_lattice", "must be positive"));
        }
        if !(self.approach_window[0] > 0.0 && self.approach_window[0] < self.approach_window[1]) {
            return Err(Error::invalid("approach_window", "must be an increasing positive pair"));
        }
        Ok(())
    }

    /// PNR velocities `{v_min, v_min + step, …}` up to and including `v_top`.
    pub fn pnr_velocities(&self, v_top: f64) -> Vec<f64> {
        let mut out = Vec::new();
        let mut k = 0usize;
        loop {
            let v = self.v_pnr_min + k as f64 * self.v_pnr_step;
            if v > v_top + 1e-9 {
                break;
            }
            out.push(v);
            k += 1;
        }
        if out.last().is_none_or(|v| (v_top - v).abs() > 1e-6) && v_top > 0.0 {
            out.push(v_top);
        }
        out
    }
}

/// Time windows (relative to now) in which the conflict point is free.
pub fn conflict_gaps(
    objects: &[ObjectPrediction],
    s_conflict: f64,
    clearance: f64,
    horizon: f64,
) -> Vec<[f64; 2]> {
    let mut busy: Vec<[f64; 2]> = objects
        .iter()
        .filter(|o| o.v > 0.1 && o.s0 < s_conflict + clearance)
        .map(|o| {
            let arrive = ((s_conflict - clearance - o.s0) / o.v).max(0.0);
            let clear = (s_conflict + clearance - o.s0) / o.v;
            [arrive, clear]
        })
        .filter(|w| w[0] < horizon)
        .collect();
    busy.sort_by(|a, b| a[0].total_cmp(&b[0]));
    let mut gaps = Vec::new();
    let mut t = 0.0;
    for w in busy {
        if w[0] > t {
            gaps.push([t, w[0]]);
        }
        t = t.max(w[1]);
    }
    if t < horizon {
        gaps.push([t, horizon]);
    }
    gaps
}

/// Inputs of behavior generation that change from cycle to cycle.
#[derive(Debug, Clone, Copy)]
pub struct GenerationInput<'a> {
    pub ego: LongitudinalState,
    pub objects: &'a [ObjectPrediction],
    /// Absolute time of the cycle, anchoring the arrival-time lattice.
    pub t_now: f64,
    /// Previous winner, already advanced to the current cycle.
    pub seed: Option<&'a BehaviorOption>,
}

fn push_unique(out: &mut Vec<f64>, t: f64) {
    if !out.iter().any(|x| (x - t).abs() < 1e-9) {
        out.push(t);
    }
}

fn arrival_samples(
    sampler: &SamplerConfig,
    input: &GenerationInput<'_>,
    gaps: &[[f64; 2]],
    range: [f64; 2],
) -> Vec<f64> {
    let mut out = Vec::new();
    let lat = sampler.t_lattice;
    let k0 = ((input.t_now + range[0]) / lat).ceil() as i64;
    let k1 = ((input.t_now + range[1]) / lat).floor() as i64;
    for k in k0..=k1 {
        let t = k as f64 * lat - input.t_now;
        if t >= range[0] - 1e-12 && t <= range[1] + 1e-12 {
            push_unique(&mut out, t);
        }
    }
    for g in gaps {
        if g[1] - g[0] < sampler.min_gap {
            continue;
        }
        for t in [g[0] + sampler.gap_delta, 0.5 * (g[0] + g[1]), g[1] - sampler.gap_delta] {
            if t >= range[0] && t <= range[1] {
                push_unique(&mut out, t);
            }
        }
    }
    if let Some(t_seed) = input.seed.and_then(|s| s.t_pga()) {
        for off in &sampler.seed_offsets {
            let t = t_seed + off;
            if t >= range[0] && t <= range[1] {
                push_unique(&mut out, t);
            }
        }
    }
    out.sort_by(|a, b| a.total_cmp(b));
    out
}

/// Constant `a_min` braking to standstill, or holding when already stopped.
pub fn fail_safe_option(ego: &LongitudinalState, a_min: f64) -> BehaviorOption {
    let target = if ego.v > 1e-6 {
        let dt = ego.v / a_min.abs();
        TargetState::new(ego.stop_position(a_min), 0.0, a_min, dt, TargetRole::Brake)
    } else {
        TargetState::new(ego.s, 0.0, 0.0, 1.0, TargetRole::Stop)
    };
    BehaviorOption::new(BehaviorKind::FailSafe, 0, alloc::vec![target])
}

fn stop_options(ctx: &SituationContext, ego: &LongitudinalState, s_target: f64, sampler: &SamplerConfig) -> Vec<BehaviorOption> {
    let mut out = Vec::new();
    let d = s_target - ego.s;
    let t_pred = ctx.constraints.t_pred;
    if d < -1e-9 {
        return out;
    }
    if d < 0.05 && ego.v < 0.05 {
        out.push(BehaviorOption::new(
            BehaviorKind::GentleStop,
            1,
            alloc::vec![TargetState::new(s_target, 0.0, 0.0, 1.0, TargetRole::Stop)],
        ));
        return out;
    }
    let natural = if ego.v > 0.5 {
        2.0 * d / ego.v
    } else {
        (10.0 * d / (3.0f64.sqrt() * 0.5 * ctx.constraints.a_max)).sqrt().max(1.0)
    };
    let mut times: Vec<f64> = Vec::new();
    for f in &sampler.stop_factors {
        push_unique(&mut times, (natural * f).min(t_pred).max(0.2));
    }
    for t in times {
        out.push(BehaviorOption::new(
            BehaviorKind::GentleStop,
            1,
            alloc::vec![TargetState::new(s_target, 0.0, 0.0, t, TargetRole::Stop)],
        ));
    }
    out
}

fn merge_options(
    ctx: &SituationContext,
    m: &MergeGeometry,
    input: &GenerationInput<'_>,
    sampler: &SamplerConfig,
) -> Vec<BehaviorOption> {
    let ego = input.ego;
    let c = &ctx.constraints;
    let t_pred = c.t_pred;
    let clearance = ctx.assumptions.risk.s_minus_0.max(ctx.assumptions.risk.s_plus_0);
    let gaps = conflict_gaps(input.objects, m.s_conflict, clearance, t_pred);
    let mut out = Vec::new();
    let [w_lo, w_hi] = sampler.approach_window;
    let v_c = m.v_curve.max(0.1);
    let t3 = (m.s_pga - m.s_curve_exit) / v_c;

    let mut any_pnr = false;
    if ego.stop_position(c.a_min) <= m.s_stop + crate::planner::PNR_TOL {
        for v_pnr in sampler.pnr_velocities(m.v_yield) {
            let s_pnr = compute_pnr(v_pnr, c.a_min, m.s_stop);
            if s_pnr <= ego.s + 0.05 {
                continue;
            }
            any_pnr = true;
            let d2 = m.s_curve_exit - s_pnr;
            let t2 = 2.0 * d2 / (v_pnr + v_c);
            let t1_nat = 2.0 * (s_pnr - ego.s) / (ego.v + v_pnr);
            let range = [
                (t2 + t3 + w_lo * t1_nat).max(t2 + t3 + 0.2),
                (t2 + t3 + w_hi * t1_nat + 2.0).min(t_pred),
            ];
            for t in arrival_samples(sampler, input, &gaps, range) {
                let t_pnr = t - t2 - t3;
                let mut targets = alloc::vec![TargetState::new(s_pnr, v_pnr, 0.0, t_pnr, TargetRole::Pnr)];
                if d2 > 1e-6 {
                    targets.push(TargetState::new(m.s_curve_exit, v_c, 0.0, t - t3, TargetRole::CurveExit));
                }
                if t3 > 1e-6 {
                    targets.push(TargetState::new(m.s_pga, v_c, 0.0, t, TargetRole::Pga));
                } else if let Some(last) = targets.last_mut() {
                    last.role = TargetRole::Pga;
                }
                out.push(BehaviorOption::new(BehaviorKind::MergeDynamic, 2, targets));
            }
        }
    }
    if !any_pnr {
        // committed, or no PNR sample left ahead
        if ego.s < m.s_curve_exit - 0.05 {
            let d2 = m.s_curve_exit - ego.s;
            let t2_nat = 2.0 * d2 / (ego.v + v_c);
            let range = [t3 + w_lo * t2_nat, (t3 + w_hi * t2_nat + 1.0).min(t_pred)];
            for t in arrival_samples(sampler, input, &gaps, range) {
                let mut targets = alloc::vec![TargetState::new(m.s_curve_exit, v_c, 0.0, t - t3, TargetRole::CurveExit)];
                if t3 > 1e-6 {
                    targets.push(TargetState::new(m.s_pga, v_c, 0.0, t, TargetRole::Pga));
                } else {
                    targets[0].role = TargetRole::Pga;
                }
                out.push(BehaviorOption::new(BehaviorKind::MergeDynamic, 2, targets));
            }
        } else if ego.s < m.s_pga {
            let d3 = m.s_pga - ego.s;
            let t3_nat = 2.0 * d3 / (ego.v + v_c);
            let range = [w_lo * t3_nat, (w_hi * t3_nat).min(t_pred)];
            let mut times = arrival_samples(sampler, input, &gaps, range);
            if t3_nat <= t_pred {
                push_unique(&mut times, t3_nat);
            }
            for t in times {
                out.push(BehaviorOption::new(
                    BehaviorKind::MergeDynamic,
                    2,
                    alloc::vec![TargetState::new(m.s_pga, v_c, 0.0, t, TargetRole::Pga)],
                ));
            }
        }
    }
    out
}

fn follow_options(
    ctx: &SituationContext,
    m: Option<&MergeGeometry>,
    lead: &DynamicSpeedLimit,
    input: &GenerationInput<'_>,
    sampler: &SamplerConfig,
) -> Vec<BehaviorOption> {
    let ego = input.ego;
    let t_pred = ctx.constraints.t_pred;
    let v_lead = lead.v.max(0.0);
    let mut out = Vec::new();
    for &t1 in &sampler.follow_times {
        if t1 >= t_pred {
            continue;
        }
        let s1 = lead.zone_start(t1);
        if s1 <= ego.s + 0.1 {
            continue;
        }
        let follow = TargetState::new(s1, v_lead, 0.0, t1, TargetRole::Follow);
        match m {
            Some(m) => {
                if s1 < m.s_stop {
                    let d = m.s_stop - s1;
                    if v_lead > 0.1 {
                        let t = t1 + 2.0 * d / v_lead;
                        if t <= t_pred {
                            out.push(BehaviorOption::new(
                                BehaviorKind::FollowThenStop,
                                1,
                                alloc::vec![follow, TargetState::new(m.s_stop, 0.0, 0.0, t, TargetRole::Stop)],
                            ));
                        }
                    }
                }
                if s1 < m.s_pga {
                    let v_pga = m.v_curve.min(v_lead);
                    if v_lead + v_pga > 0.1 {
                        let t = t1 + 2.0 * (m.s_pga - s1) / (v_lead + v_pga);
                        if t <= t_pred {
                            out.push(BehaviorOption::new(
                                BehaviorKind::FollowThenMerge,
                                2,
                                alloc::vec![follow, TargetState::new(m.s_pga, v_pga, 0.0, t, TargetRole::Pga)],
                            ));
                        }
                    }
                }
            }
            None => out.push(BehaviorOption::new(BehaviorKind::LaneFollow, 1, alloc::vec![follow])),
        }
    }
    out
}

const MIN_BOUNDARY_TIME: f64 = 1.0;

/// Distance before the PGA from which a merge context plans as on a free lane.
pub const PGA_TOL: f64 = 0.05;

fn lane_follow_options(ctx: &SituationContext, input: &GenerationInput<'_>, sampler: &SamplerConfig) -> Vec<BehaviorOption> {
    let ego = input.ego;
    let prof = &ctx.constraints.v_max_profile;
    let mut out = Vec::new();
    let end = ctx.interval[1];
    if let Some(vb) = ctx.boundary_speed.filter(|_| !ctx.closed) {
        let d = end - ego.s;
        if d > 0.5 {
            let v_t = vb.min(prof.min_over(ego.s, end));
            let nat = 2.0 * d / (ego.v + v_t).max(0.5);
            for f in [0.9, 1.0, 1.2] {
                let t = nat * f;
                if t >= MIN_BOUNDARY_TIME && t <= ctx.constraints.t_pred {
                    out.push(BehaviorOption::new(
                        BehaviorKind::LaneFollow,
                        1,
                        alloc::vec![TargetState::new(end, v_t, 0.0, t, TargetRole::Boundary)],
                    ));
                }
            }
        }
    }
    for &t in &sampler.cruise_durations {
        let mut v_t = prof.at(ego.s);
        let mut s_f = ego.s + 0.5 * (ego.v + v_t) * t;
        for _ in 0..3 {
            v_t = v_t.min(prof.min_over(ego.s, s_f + 5.0));
            s_f = ego.s + 0.5 * (ego.v + v_t) * t;
        }
        out.push(BehaviorOption::new(
            BehaviorKind::LaneFollow,
            1,
            alloc::vec![TargetState::new(s_f, v_t, 0.0, t, TargetRole::Plain)],
        ));
    }
    out
}

/// Variants of `opt` whose first leg passes through the entry, and the
/// entry and exit, of the first slower stretch of `prof` ahead of the ego.
/// Legs take their average-speed travel time except the first, which absorbs
/// the remaining duration.
pub fn with_speed_waypoints(opt: &BehaviorOption, ego: &LongitudinalState, prof: &SpeedProfile) -> Vec<BehaviorOption> {
    let mut out = Vec::new();
    let Some(&first) = opt.targets.first() else {
        return out;
    };
    if first.role == TargetRole::Brake {
        return out;
    }
    // rest-to-rest quintics peak at 1.875 times the average speed
    let v_avg = (first.s_f - ego.s) / first.t_f.max(1e-6);
    let v_hi = ego.v.max(first.v_f).max(1.875 * v_avg);
    let pieces = prof.pieces(first.s_f.max(ego.s) + 1.0);
    let mut zone: Option<(f64, f64, f64)> = None;
    for &(a, b, v) in &pieces {
        if b <= ego.s || a >= first.s_f {
            continue;
        }
        if v < v_hi - 1e-6 {
            zone = Some(match zone {
                Some((za, _, zv)) => (za, b, zv.min(v)),
                None => (a, b, v),
            });
        } else if zone.is_some() {
            break;
        }
    }
    let Some((za, zb, vz)) = zone else {
        return out;
    };
    let entry = za > ego.s + 0.5;
    let exit = zb < first.s_f - 0.5 && zb > ego.s + 0.5;
    let mut variants: Vec<Vec<(f64, f64)>> = Vec::new();
    let v_exit = vz.min(first.v_f);
    if entry && exit {
        variants.push(alloc::vec![(za, vz), (zb, v_exit)]);
    }
    if entry && (!exit || first.v_f < vz) {
        variants.push(alloc::vec![(za, vz)]);
    }
    if !entry && exit {
        variants.push(alloc::vec![(zb, v_exit)]);
    }
    for points in variants {
        let mut legs = Vec::with_capacity(points.len() + 1);
        let mut prev = (ego.s, ego.v);
        for &p in points.iter().chain(core::iter::once(&(first.s_f, first.v_f))) {
            legs.push(2.0 * (p.0 - prev.0) / (prev.1 + p.1).max(0.1));
            prev = p;
        }
        let slack = first.t_f - legs.iter().sum::<f64>();
        if legs[0] + slack < 0.5 * legs[0] {
            continue;
        }
        legs[0] += slack;
        let mut acc = 0.0;
        let mut inserted = Vec::with_capacity(points.len());
        for (p, n) in points.iter().zip(&legs) {
            acc += n;
            inserted.push(TargetState::new(p.0, p.1, 0.0, acc, TargetRole::SpeedLimit));
        }
        let mut o = opt.clone();
        o.targets.splice(0..0, inserted);
        o.seeded = false;
        out.push(o);
    }
    out
}

/// Generates the ordered behavior list for the current cycle.
pub fn generate_behavior_options(
    ctx: &SituationContext,
    input: &GenerationInput<'_>,
    sampler: &SamplerConfig,
) -> Vec<BehaviorOption> {
    let ego = input.ego;
    let mut out: Vec<BehaviorOption> = Vec::new();
    if let Some(seed) = input.seed {
        if seed.is_well_formed() && seed.kind != BehaviorKind::FailSafe {
            out.push(seed.clone());
        }
    }
    let lead = ctx.dynamic.filter(|d| match &ctx.merge {
        Some(m) => d.zone_start(0.0) < m.s_pga,
        None => true,
    });
    let merge = ctx.merge.as_ref().filter(|m| ego.s < m.s_pga - PGA_TOL);
    match (merge, lead) {
        (Some(m), None) => {
            out.extend(merge_options(ctx, m, input, sampler));
            out.extend(stop_options(ctx, &ego, m.s_stop, sampler));
        }
        (Some(m), Some(lead)) => {
            out.extend(follow_options(ctx, Some(m), &lead, input, sampler));
            let zone = lead.zone_start(0.0);
            out.extend(stop_options(ctx, &ego, m.s_stop.min(zone.max(ego.s)), sampler));
        }
        (None, Some(lead)) => {
            out.extend(follow_options(ctx, None, &lead, input, sampler));
            out.extend(lane_follow_options(ctx, input, sampler));
        }
        (None, None) => out.extend(lane_follow_options(ctx, input, sampler)),
    }
    let prof = &ctx.constraints.v_max_profile;
    let extra: Vec<BehaviorOption> = out
        .iter()
        .filter(|o| !o.seeded)
        .flat_map(|o| with_speed_waypoints(o, &ego, prof))
        .collect();
    out.extend(extra);
    out.retain(|o| o.is_well_formed() && o.final_target().is_some_and(|t| t.t_f <= ctx.constraints.t_pred + 1e-9));
    out.push(fail_safe_option(&ego, ctx.constraints.a_min));
    // stable sort keeps grid order inside each class, seed first
    out.sort_by(|a, b| b.importance.cmp(&a.importance));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_path, PathBuilder, Vec2};
    use crate::risk::Source;
    use proptest::prelude::*;

    fn straight(len: f64) -> PathRef {
        build_path(&[Vec2::new(0.0, 0.0), Vec2::new(len / 2.0, 0.0), Vec2::new(len, 0.0)], 0.5).unwrap()
    }

    /// straight – ramp – arc(R) – ramp – straight, repeated per radius
    fn arc_path(radii: &[f64], straight_len: f64) -> PathRef {
        let mut b = PathBuilder::new(Vec2::new(0.0, 0.0), 0.0, 0.25).straight(straight_len);
        for &r in radii {
            let k = 1.0 / r;
            b = b
                .clothoid(3.0, k)
                .arc(core::f64::consts::FRAC_PI_2 * r - 3.0, k)
                .clothoid(3.0, 0.0)
                .straight(straight_len);
        }
        b.build(0.1).unwrap()
    }

    fn rules(v_sl: f64, junctions: Vec<JunctionRule>) -> MapRules {
        MapRules {
            v_sl: SpeedProfile::constant(v_sl),
            junctions,
            a_min: -4.0,
            a_max: 2.0,
            a_perp_max: 1.45,
            t_pred: 10.0,
            p_risk_max: 0.05,
        }
    }

    fn obj(id: u32, lane: u16, s0: f64, v: f64) -> ObjectPrediction {
        ObjectPrediction {
            id: ObjectId(id),
            lane: LaneId(lane),
            s0,
            v,
            sigma0: 0.5,
            sigma_rate: 0.3,
            horizon: 10.0,
            source: Source::External,
        }
    }

    #[test]
    fn eq2_examples() {
        let v = |kappa: f64| 8.33f64.min((1.45 / kappa).sqrt());
        assert!((v(0.08) - 4.2573).abs() < 1e-4);
        assert!((v(0.02) - 8.33).abs() < 1e-12);
        let path = straight(50.0);
        let prof = speed_limit_profile(&path, &SpeedProfile::constant(8.33), 1.45);
        assert!(prof.values.iter().all(|x| *x == 8.33));
    }

    #[test]
    fn segmentwise_constants() {
        let path = arc_path(&[12.5], 20.0);
        let raw = speed_limit_profile(&path, &SpeedProfile::constant(8.33), 1.45);
        let approx = segmentwise_constant_approximation(&raw, &path);
        assert_eq!(approx.values.len(), 3, "{approx:?}");
        assert!((approx.values[0] - 8.33).abs() < 1e-12);
        assert!((approx.values[1] - (1.45f64 * 12.5).sqrt()).abs() < 0.05);
        assert!((approx.values[2] - 8.33).abs() < 1e-12);

        let two = arc_path(&[12.5, 25.0], 20.0);
        let raw = speed_limit_profile(&two, &SpeedProfile::constant(8.33), 1.45);
        let approx = segmentwise_constant_approximation(&raw, &two);
        let v: Vec<f64> = approx.values.clone();
        assert_eq!(v.len(), 5, "{v:?}");
        assert!((v[1] - 4.2573).abs() < 0.05);
        assert_eq!(v[2], 8.33);
        assert!((v[3] - (1.45f64 * 25.0).sqrt()).abs() < 0.05);

        let flat = straight(80.0);
        let raw = speed_limit_profile(&flat, &SpeedProfile::constant(8.33), 1.45);
        let approx = segmentwise_constant_approximation(&raw, &flat);
        assert_eq!(approx.values, alloc::vec![8.33]);
    }

    #[test]
    fn pnr_examples() {
        assert!((compute_pnr(8.33, -4.0, 100.0) - (100.0 - 8.33 * 8.33 / 8.0)).abs() < 1e-12);
        assert!((compute_pnr(8.33, -4.0, 100.0) - 91.326).abs() < 1e-3);
        assert_eq!(compute_pnr(0.0, -4.0, 100.0), 100.0);
        assert_eq!(compute_pnr(4.0, -4.0, 100.0), 98.0);
    }

    #[test]
    fn dynamic_limit_examples() {
        let lead = obj(1, 0, 50.0, 5.0);
        let d = dynamic_speed_limit(&lead, 10.0);
        assert_eq!(d.apply(8.33, 39.9, 0.0), 8.33);
        assert_eq!(d.apply(8.33, 40.0, 0.0), 5.0);
        let stopped = dynamic_speed_limit(&obj(2, 0, 30.0, 0.0), 10.0);
        assert_eq!(stopped.apply(8.33, 20.0, 3.0), 0.0);
        assert_eq!(stopped.apply(8.33, 19.9, 3.0), 8.33);
    }

    #[test]
    fn contexts_single_junction() {
        let path = straight(200.0);
        let ctxs = precompute_contexts(
            &path,
            &rules(8.33, alloc::vec![JunctionRule { s_stop: 120.0, s_pga: 140.0, s_conflict: None }]),
            &RegularizingAssumptions::default(),
        )
        .unwrap();
        assert_eq!(ctxs.len(), 3);
        let m = &ctxs[1];
        assert_eq!(m.kind, ContextKind::Merge);
        assert!(m.interval[1] - m.interval[0] <= 8.33 * 10.0 + 1e-6);
        assert!((m.interval[1] - m.interval[0] - 83.3).abs() < 1e-6);
        assert!(ctxs.last().unwrap().closed);

        let plain = precompute_contexts(&path, &rules(8.33, Vec::new()), &RegularizingAssumptions::default()).unwrap();
        assert_eq!(plain.len(), 1);
        assert_eq!(plain[0].interval, [0.0, 200.0]);
    }

    #[test]
    fn contexts_two_junctions() {
        let path = straight(200.0);
        let r = rules(
            8.33,
            alloc::vec![
                JunctionRule { s_stop: 40.0, s_pga: 50.0, s_conflict: None },
                JunctionRule { s_stop: 90.0, s_pga: 100.0, s_conflict: None },
            ],
        );
        let ctxs = precompute_contexts(&path, &r, &RegularizingAssumptions::default()).unwrap();
        let kinds: Vec<ContextKind> = ctxs.iter().map(|c| c.kind).collect();
        assert_eq!(kinds, alloc::vec![ContextKind::Merge, ContextKind::Merge, ContextKind::Free]);
        assert_eq!(ctxs[0].interval[1], ctxs[1].interval[0]);
        // the shared boundary speed is admissible on both sides
        let vb = ctxs[0].boundary_speed.unwrap();
        assert!(vb <= ctxs[0].static_v_max(50.0 - 1e-6) && vb <= ctxs[1].static_v_max(50.0));
    }

    #[test]
    fn rule_outside_route_is_rejected() {
        let path = straight(100.0);
        let r = rules(8.33, alloc::vec![JunctionRule { s_stop: 120.0, s_pga: 130.0, s_conflict: None }]);
        assert!(matches!(
            precompute_contexts(&path, &r, &RegularizingAssumptions::default()),
            Err(Error::InconsistentRules(_))
        ));
    }

    fn pilot() -> Vec<SituationContext> {
        let path = straight(200.0);
        let r = rules(8.33, alloc::vec![JunctionRule { s_stop: 100.0, s_pga: 110.0, s_conflict: Some(100.0) }]);
        let mut a = RegularizingAssumptions::default();
        a.rational_driver.push(RationalDriver { lane: LaneId(2), assumed: true });
        a.shared_lane = Some(SharedLane { lane: LaneId(1), from_s: 100.0 });
        precompute_contexts(&path, &r, &a).unwrap()
    }

    #[test]
    fn selection_and_update() {
        let ctxs = pilot();
        let first = select_and_update_context(&ctxs, &LongitudinalState::new(0.0, 8.0, 0.0), &[]).unwrap();
        assert_eq!(first.interval[0], 0.0);
        let outside = select_and_update_context(&ctxs, &LongitudinalState::new(-1.0, 8.0, 0.0), &[]);
        assert_eq!(outside, Err(Error::NoContext(-1.0)));

        let ego = LongitudinalState::new(50.0, 8.0, 0.0);
        let lead = obj(4, 0, 90.0, 4.0);
        let ctx = select_and_update_context(&ctxs, &ego, &[lead.clone()]).unwrap();
        assert!(ctx.dynamic.is_some());
        let opts = generate_behavior_options(
            &ctx,
            &GenerationInput { ego, objects: &[lead], t_now: 0.0, seed: None },
            &SamplerConfig::default(),
        );
        assert!(opts.iter().any(|o| o.kind == BehaviorKind::FollowThenMerge && o.targets.len() == 2));
        assert!(opts.iter().any(|o| o.kind == BehaviorKind::FollowThenStop));
        assert!(!opts.iter().any(|o| o.kind == BehaviorKind::MergeDynamic));

        let speeder = obj(5, 2, 70.0, 12.0);
        let ctx = select_and_update_context(&ctxs, &ego, &[speeder]).unwrap();
        assert!(!ctx.assumptions.assumes_rational(LaneId(2)));
    }

    #[test]
    fn advance_drops_passed_targets() {
        let opt = BehaviorOption::new(
            BehaviorKind::MergeDynamic,
            2,
            alloc::vec![
                TargetState::new(20.0, 4.0, 0.0, 3.0, TargetRole::Pnr),
                TargetState::new(40.0, 4.0, 0.0, 8.0, TargetRole::Pga),
            ],
        );
        let next = opt.advance(25.0, 3.5).unwrap();
        assert_eq!(next.targets.len(), 1);
        assert_eq!(next.targets[0].role, TargetRole::Pga);
        assert!((next.targets[0].t_f - 4.5).abs() < 1e-12);
    }

    #[test]
    fn empty_road_options() {
        let ctxs = pilot();
        let ego = LongitudinalState::new(60.0, 6.0, 0.0);
        let ctx = select_and_update_context(&ctxs, &ego, &[]).unwrap();
        let opts = generate_behavior_options(
            &ctx,
            &GenerationInput { ego, objects: &[], t_now: 0.0, seed: None },
            &SamplerConfig::default(),
        );
        let merges: Vec<&BehaviorOption> = opts.iter().filter(|o| o.kind == BehaviorKind::MergeDynamic).collect();
        assert!(!merges.is_empty());
        assert!(merges.iter().all(|o| o.final_target().unwrap().s_f == 110.0));
        assert_eq!(opts.iter().filter(|o| o.kind == BehaviorKind::FailSafe).count(), 1);
        assert!(opts.iter().any(|o| o.kind == BehaviorKind::GentleStop));
        for o in &merges {
            let pnr = o.targets[0];
            assert_eq!(pnr.role, TargetRole::Pnr);
            assert!(pnr.s_f + pnr.v_f * pnr.v_f / 8.0 <= 100.0 + 1e-9);
        }
    }

    #[test]
    fn stopped_at_line_has_only_downstream_options() {
        let ctxs = pilot();
        let ego = LongitudinalState::new(100.0, 0.0, 0.0);
        let ctx = select_and_update_context(&ctxs, &ego, &[]).unwrap();
        let opts = generate_behavior_options(
            &ctx,
            &GenerationInput { ego, objects: &[], t_now: 0.0, seed: None },
            &SamplerConfig::default(),
        );
        assert!(opts.iter().any(|o| o.kind == BehaviorKind::FailSafe));
        assert!(opts
            .iter()
            .filter(|o| o.kind == BehaviorKind::MergeDynamic)
            .all(|o| o.targets.iter().all(|t| t.role != TargetRole::Pnr)));
    }

    #[test]
    fn gap_sampling_grid() {
        let sampler = SamplerConfig {
            t_lattice: 100.0,
            seed_offsets: Vec::new(),
            ..SamplerConfig::default()
        };
        // vehicles pass the conflict point at t = 1 and t = 7
        let objs = [obj(1, 1, 100.0 - 8.0, 8.0), obj(2, 1, 100.0 - 56.0, 8.0)];
        let gaps = conflict_gaps(&objs, 100.0, 0.0, 10.0);
        assert_eq!(gaps.len(), 3);
        assert!((gaps[1][0] - 1.0).abs() < 1e-12 && (gaps[1][1] - 7.0).abs() < 1e-12);
        let input = GenerationInput {
            ego: LongitudinalState::new(0.0, 0.0, 0.0),
            objects: &objs,
            t_now: 0.0,
            seed: None,
        };
        let ts = arrival_samples(&sampler, &input, &gaps[1..2], [0.5, 10.0]);
        assert_eq!(ts, alloc::vec![1.5, 4.0, 6.5]);
        // three velocities times these samples
        assert_eq!(sampler.pnr_velocities(2.0), alloc::vec![1.0, 1.5, 2.0]);
    }

    #[test]
    fn speed_waypoints_bracket_slow_stretch() {
        let prof = SpeedProfile { breaks: alloc::vec![0.0, 40.0, 60.0], values: alloc::vec![8.0, 4.0, 8.0] };
        let opt = BehaviorOption::new(
            BehaviorKind::LaneFollow,
            1,
            alloc::vec![TargetState::new(100.0, 8.0, 0.0, 24.0, TargetRole::Plain)],
        );
        let ego = LongitudinalState::new(0.0, 8.0, 0.0);
        let vars = with_speed_waypoints(&opt, &ego, &prof);
        assert!(!vars.is_empty());
        let both = vars.iter().find(|o| o.targets.len() == 3).unwrap();
        assert_eq!((both.targets[0].s_f, both.targets[0].v_f), (40.0, 4.0));
        assert_eq!((both.targets[1].s_f, both.targets[1].v_f), (60.0, 4.0));
        assert!(both.targets[..2].iter().all(|t| t.role == TargetRole::SpeedLimit));
        assert!(both.targets.windows(2).all(|w| w[0].t_f < w[1].t_f));
        assert_eq!(both.targets[2].t_f, 24.0);
        // no slower stretch, no variants
        assert!(with_speed_waypoints(&opt, &ego, &SpeedProfile::constant(8.0)).is_empty());
    }

    proptest! {
        #[test]
        fn contexts_partition_route(rel_stop in 0.2f64..0.8, extra in 5.0f64..30.0, q in 0.0f64..1.0) {
            let path = straight(200.0);
            let s_stop = 200.0 * rel_stop;
            let s_pga = (s_stop + extra).min(200.0);
            let ctxs = precompute_contexts(
                &path,
                &rules(8.33, alloc::vec![JunctionRule { s_stop, s_pga, s_conflict: None }]),
                &RegularizingAssumptions::default(),
            ).unwrap();
            let s = 200.0 * q;
            prop_assert_eq!(ctxs.iter().filter(|c| c.contains(s)).count(), 1);
        }

        #[test]
        fn dynamic_limit_never_exceeds_static(s in 0.0f64..200.0, t in 0.0f64..10.0, v in 0.0f64..15.0, s0 in 0.0f64..150.0) {
            let d = dynamic_speed_limit(&obj(1, 0, s0, v), 8.0);
            let stat = 8.33;
            prop_assert!(d.apply(stat, s, t) <= stat);
        }

        #[test]
        fn generated_lists_are_sorted_with_fail_safe(s in 0.0f64..109.0, v in 0.0f64..8.33) {
            let ctxs = pilot();
            let ego = LongitudinalState::new(s, v, 0.0);
            let ctx = select_and_update_context(&ctxs, &ego, &[]).unwrap();
            let opts = generate_behavior_options(
                &ctx,
                &GenerationInput { ego, objects: &[], t_now: 0.0, seed: None },
                &SamplerConfig::default(),
            );
            prop_assert!(opts.iter().any(|o| o.kind == BehaviorKind::FailSafe));
            prop_assert!(opts.windows(2).all(|w| w[0].importance >= w[1].importance));
            for o in opts.iter().filter(|o| o.kind == BehaviorKind::MergeDynamic) {
                if o.targets[0].role == TargetRole::Pnr {
                    let p = o.targets[0];
                    prop_assert!(p.s_f + p.v_f * p.v_f / 8.0 <= 100.0 + 1e-9);
                }
            }
        }
    }
}
