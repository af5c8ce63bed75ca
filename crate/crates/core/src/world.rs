//! Deterministic junction simulator: scenario description, actor models,
//! perception with occlusion and latency, and object-list fusion.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::context::{
    precompute_contexts, JunctionRule, MapRules, RationalDriver, RegularizingAssumptions, SharedLane,
    SituationContext, SpeedProfile,
};
use crate::error::{Error, Result};
use crate::geometry::{PathBuilder, PathRef, PathSpec, Polygon, Vec2};
use crate::planner::PlannerConfig;
use crate::risk::{reliability, LaneId, ObjectId, ObjectPrediction, ReliabilityEstimate, RiskConfig, Source};
use crate::context::SamplerConfig;
use crate::tracking::{bicycle_step, TrackerConfig, VehicleParams, VehicleState};

/// The ego route always carries this lane id.
pub const EGO_LANE: LaneId = LaneId(0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PathPiece {
    Straight { length: f64 },
    Clothoid { length: f64, kappa_end: f64 },
    Arc { length: f64, kappa: f64 },
}

/// Serialized path: either primitive pieces or raw waypoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PathDef {
    Pieces {
        start: Vec2,
        heading: f64,
        pieces: Vec<PathPiece>,
        resample_step: f64,
    },
    Waypoints(PathSpec),
}

impl PathDef {
    pub fn build(&self) -> Result<PathRef> {
        match self {
            PathDef::Waypoints(spec) => spec.build(),
            PathDef::Pieces {
                start,
                heading,
                pieces,
                resample_step,
            } => {
                if !(*resample_step > 0.0) {
                    return Err(Error::invalid("resample_step", "must be positive"));
                }
                let mut b = PathBuilder::new(*start, *heading, (0.5 * resample_step).min(0.1));
                for p in pieces {
                    b = match *p {
                        PathPiece::Straight { length } => b.straight(length),
                        PathPiece::Clothoid { length, kappa_end } => b.clothoid(length, kappa_end),
                        PathPiece::Arc { length, kappa } => b.arc(length, kappa),
                    };
                }
                b.build(*resample_step)
            }
        }
    }

    fn validate(&self, field: &str) -> Result<()> {
        if let PathDef::Pieces { pieces, .. } = self {
            if pieces.is_empty() {
                return Err(Error::invalid(field, "path needs at least one piece"));
            }
            for (i, p) in pieces.iter().enumerate() {
                let len = match *p {
                    PathPiece::Straight { length } => length,
                    PathPiece::Clothoid { length, .. } => length,
                    PathPiece::Arc { length, .. } => length,
                };
                if !(len > 0.0) {
                    return Err(Error::invalid(&format!("{field}.pieces[{i}].length"), "must be positive"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneDef {
    pub id: u16,
    pub path: PathDef,
    /// Common coordinate of a point is its lane arc length plus `offset`.
    pub offset: f64,
    /// Common coordinate from which the ego route runs on this lane.
    #[serde(default)]
    pub join_s: Option<f64>,
    /// Road users on this lane are assumed not to enter the ego lane.
    #[serde(default)]
    pub rational_driver: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JunctionDef {
    pub s_stop: f64,
    pub s_pga: f64,
    pub main_lane: u16,
    /// Conflict window in main-lane arc length.
    pub conflict: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdmParams {
    pub time_headway: f64,
    pub min_gap: f64,
    pub accel: f64,
    pub decel: f64,
    pub exponent: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        IdmParams {
            time_headway: 1.5,
            min_gap: 2.0,
            accel: 1.2,
            decel: 2.0,
            exponent: 4.0,
        }
    }
}

impl IdmParams {
    /// Intelligent-driver acceleration; `gap` is bumper to bumper.
    pub fn accel(&self, v: f64, v_desired: f64, leader: Option<(f64, f64)>) -> f64 {
        let free = if v_desired > 0.0 {
            1.0 - (v / v_desired).powf(self.exponent)
        } else {
            -1.0
        };
        let inter = match leader {
            Some((gap, v_lead)) => {
                let dv = v - v_lead;
                let s_star = self.min_gap + (v * self.time_headway + v * dv / (2.0 * (self.accel * self.decel).sqrt())).max(0.0);
                let g = gap.max(1e-3);
                (s_star / g) * (s_star / g)
            }
            None => 0.0,
        };
        self.accel * (free - inter)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActorBehavior {
    ConstantSpeed,
    IdmFollow,
    /// Leaves the lane at the given lane arc length.
    TurnOffAt(f64),
}

fn default_length() -> f64 {
    4.5
}

fn default_width() -> f64 {
    1.8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorSpec {
    pub id: u32,
    pub lane: u16,
    pub s0: f64,
    pub v0: f64,
    pub behavior: ActorBehavior,
    #[serde(default = "default_length")]
    pub length: f64,
    #[serde(default = "default_width")]
    pub width: f64,
}

/// Half-widths of the uniform seed perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Perturbation {
    pub ego_v0: f64,
    pub ego_s0: f64,
    pub actor_v0: f64,
    pub actor_s0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorConfig {
    pub latency_ext: f64,
    pub sigma0: f64,
    pub sigma_rate: f64,
    pub assoc_gate: f64,
    pub assoc_radius: f64,
    /// Standard deviation of the position noise on every detection.
    pub position_noise: f64,
    /// How far back along the main lane the end of sight is searched.
    pub eos_search: f64,
    pub eos_step: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        SensorConfig {
            latency_ext: 0.015,
            sigma0: 0.5,
            sigma_rate: 0.3,
            assoc_gate: 2.0,
            assoc_radius: 10.0,
            position_noise: 0.0,
            eos_search: 150.0,
            eos_step: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityStep {
    pub t: f64,
    pub estimate: ReliabilityEstimate,
}

/// Scripted offset on the external object list.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtFault {
    pub t_from: f64,
    pub t_to: f64,
    pub offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoInit {
    pub s: f64,
    pub v: f64,
}

fn default_lane_width() -> f64 {
    3.5
}

fn default_plan_hz() -> f64 {
    10.0
}

fn default_physics_step() -> f64 {
    0.05
}

fn default_duration() -> f64 {
    40.0
}

fn default_rules() -> RulesDef {
    RulesDef::default()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RulesDef {
    pub v_sl: f64,
    pub a_min: f64,
    pub a_max: f64,
    pub a_perp_max: f64,
    pub t_pred: f64,
    pub p_risk_max: f64,
}

impl Default for RulesDef {
    fn default() -> Self {
        RulesDef {
            v_sl: 8.33,
            a_min: -4.0,
            a_max: 2.0,
            a_perp_max: 1.45,
            t_pred: 10.0,
            p_risk_max: 0.05,
        }
    }
}

/// Serialized scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    #[serde(default)]
    pub category: Option<String>,
    pub seed: u64,
    #[serde(default = "default_duration")]
    pub duration: f64,
    #[serde(default = "default_plan_hz")]
    pub plan_hz: f64,
    #[serde(default = "default_physics_step")]
    pub physics_step: f64,
    pub ego_path: PathDef,
    pub ego_init: EgoInit,
    #[serde(default = "default_lane_width")]
    pub lane_width: f64,
    #[serde(default)]
    pub lanes: Vec<LaneDef>,
    pub junction: JunctionDef,
    #[serde(default = "default_rules")]
    pub rules: RulesDef,
    #[serde(default)]
    pub risk: RiskConfig,
    #[serde(default)]
    pub occlusions: Vec<Polygon>,
    /// Ego field of view in the vehicle frame.
    pub ego_fov: Polygon,
    pub ext_fov: Polygon,
    #[serde(default)]
    pub actors: Vec<ActorSpec>,
    #[serde(default)]
    pub sensors: SensorConfig,
    #[serde(default)]
    pub idm: IdmParams,
    #[serde(default)]
    pub perturbation: Perturbation,
    #[serde(default)]
    pub reliability: Vec<ReliabilityStep>,
    #[serde(default)]
    pub ext_faults: Vec<ExtFault>,
    #[serde(default)]
    pub vehicle: VehicleParams,
    #[serde(default)]
    pub tracker: TrackerConfig,
    #[serde(default)]
    pub planner: PlannerConfig,
    #[serde(default)]
    pub sampler: SamplerConfig,
}

fn positive(field: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("must be positive, got {x}")))
    }
}

fn scoped(prefix: &str, r: Result<()>) -> Result<()> {
    r.map_err(|e| match e {
        Error::InvalidConfig { field, reason } => Error::InvalidConfig {
            field: format!("{prefix}.{field}"),
            reason,
        },
        other => other,
    })
}

impl ScenarioSpec {
    /// Checks every field that the builder relies on, naming the first bad one.
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::invalid("name", "must not be empty"));
        }
        positive("duration", self.duration)?;
        positive("plan_hz", self.plan_hz)?;
        positive("physics_step", self.physics_step)?;
        let ratio = 1.0 / (self.plan_hz * self.physics_step);
        if (ratio - ratio.round()).abs() > 1e-6 || ratio.round() < 1.0 {
            return Err(Error::invalid("plan_hz", "planning period must be a multiple of physics_step"));
        }
        positive("lane_width", self.lane_width)?;
        self.ego_path.validate("ego_path")?;
        if !(self.ego_init.v >= 0.0) {
            return Err(Error::invalid("ego_init.v", "must be non-negative"));
        }
        if !(self.junction.s_stop < self.junction.s_pga) {
            return Err(Error::invalid("junction.s_pga", "must lie after junction.s_stop"));
        }
        if !(self.ego_init.s < self.junction.s_pga) {
            return Err(Error::invalid("ego_init.s", "ego must start before the point of guaranteed arrival"));
        }
        if !(self.junction.conflict[0] <= self.junction.conflict[1]) {
            return Err(Error::invalid("junction.conflict", "window must be increasing"));
        }
        let mut ids: Vec<u16> = Vec::new();
        for (i, l) in self.lanes.iter().enumerate() {
            if l.id == EGO_LANE.0 {
                return Err(Error::invalid(&format!("lanes[{i}].id"), "lane 0 is reserved for the ego route"));
            }
            if ids.contains(&l.id) {
                return Err(Error::invalid(&format!("lanes[{i}].id"), "duplicate lane id"));
            }
            ids.push(l.id);
            l.path.validate(&format!("lanes[{i}].path"))?;
        }
        if !ids.contains(&self.junction.main_lane) {
            return Err(Error::invalid("junction.main_lane", "unknown lane"));
        }
        let rules = &self.rules;
        positive("rules.v_sl", rules.v_sl)?;
        if !(rules.a_min < 0.0) {
            return Err(Error::invalid("rules.a_min", "must be negative"));
        }
        positive("rules.a_max", rules.a_max)?;
        positive("rules.a_perp_max", rules.a_perp_max)?;
        positive("rules.t_pred", rules.t_pred)?;
        if !(0.0..=1.0).contains(&rules.p_risk_max) {
            return Err(Error::invalid("rules.p_risk_max", "must lie in [0, 1]"));
        }
        for (i, p) in self.occlusions.iter().enumerate() {
            if !p.is_simple() {
                return Err(Error::invalid(&format!("occlusions[{i}]"), "polygon must be simple"));
            }
        }
        if !self.ego_fov.is_simple() {
            return Err(Error::invalid("ego_fov", "polygon must be simple"));
        }
        if !self.ext_fov.is_simple() {
            return Err(Error::invalid("ext_fov", "polygon must be simple"));
        }
        let mut actor_ids: Vec<u32> = Vec::new();
        for (i, a) in self.actors.iter().enumerate() {
            if actor_ids.contains(&a.id) {
                return Err(Error::invalid(&format!("actors[{i}].id"), "duplicate actor id"));
            }
            actor_ids.push(a.id);
            if a.lane != EGO_LANE.0 && !ids.contains(&a.lane) {
                return Err(Error::invalid(&format!("actors[{i}].lane"), "unknown lane"));
            }
            if !(a.v0 >= 0.0) {
                return Err(Error::invalid(&format!("actors[{i}].v0"), "must be non-negative"));
            }
            positive(&format!("actors[{i}].length"), a.length)?;
            positive(&format!("actors[{i}].width"), a.width)?;
        }
        let s = &self.sensors;
        if !(s.latency_ext >= 0.0) {
            return Err(Error::invalid("sensors.latency_ext", "must be non-negative"));
        }
        positive("sensors.sigma0", s.sigma0)?;
        if !(s.sigma_rate >= 0.0) {
            return Err(Error::invalid("sensors.sigma_rate", "must be non-negative"));
        }
        positive("sensors.assoc_gate", s.assoc_gate)?;
        if !(s.assoc_radius >= s.assoc_gate) {
            return Err(Error::invalid("sensors.assoc_radius", "must be at least the gate"));
        }
        if !(s.position_noise >= 0.0) {
            return Err(Error::invalid("sensors.position_noise", "must be non-negative"));
        }
        positive("sensors.eos_step", s.eos_step)?;
        for (i, r) in self.reliability.iter().enumerate() {
            r.estimate
                .validate()
                .map_err(|e| Error::invalid(&format!("reliability[{i}].estimate"), format!("{e}")))?;
        }
        scoped("vehicle", self.vehicle.validate())?;
        scoped("tracker", self.tracker.validate())?;
        scoped("planner", self.planner.validate())?;
        scoped("sampler", self.sampler.validate())?;
        scoped("risk", self.risk.validate())
    }
}

#[derive(Debug, Clone)]
pub struct Lane {
    pub def: LaneDef,
    pub path: PathRef,
}

/// A validated scenario with built paths and precomputed contexts.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub ego_path: PathRef,
    pub left_boundary: PathRef,
    pub right_boundary: PathRef,
    pub lanes: Vec<Lane>,
    pub rules: MapRules,
    pub assumptions: RegularizingAssumptions,
    pub contexts: Vec<SituationContext>,
    /// Conflict point in the common coordinate.
    pub s_conflict: f64,
}

impl Scenario {
    pub fn build(spec: ScenarioSpec) -> Result<Self> {
        spec.validate()?;
        let ego_path = spec.ego_path.build()?;
        let left_boundary = ego_path.offset(0.5 * spec.lane_width)?;
        let right_boundary = ego_path.offset(-0.5 * spec.lane_width)?;
        let mut lanes = Vec::new();
        for l in &spec.lanes {
            lanes.push(Lane {
                def: l.clone(),
                path: l.path.build()?,
            });
        }
        let main = lanes
            .iter()
            .find(|l| l.def.id == spec.junction.main_lane)
            .expect("validated main lane");
        let s_conflict = spec.junction.conflict[0] + main.def.offset;
        let r = &spec.rules;
        let rules = MapRules {
            v_sl: SpeedProfile::constant(r.v_sl),
            junctions: alloc::vec![JunctionRule {
                s_stop: spec.junction.s_stop,
                s_pga: spec.junction.s_pga,
                s_conflict: Some(s_conflict),
            }],
            a_min: r.a_min,
            a_max: r.a_max,
            a_perp_max: r.a_perp_max,
            t_pred: r.t_pred,
            p_risk_max: r.p_risk_max,
        };
        let mut risk = spec.risk.clone();
        // margins are bumper gaps; the planner compares reference points
        risk.s_minus_0 += spec.vehicle.length;
        risk.s_plus_0 += spec.vehicle.length;
        risk.eos_lane = LaneId(spec.junction.main_lane);
        risk.eos_conflict = s_conflict;
        risk.eos_speed = r.v_sl;
        risk.eos_sigma0 = spec.sensors.sigma0;
        risk.eos_sigma_rate = spec.sensors.sigma_rate;
        risk.eos_horizon = r.t_pred;
        risk.eos_position = s_conflict - 85.0;
        let assumptions = RegularizingAssumptions {
            priority_lane_polygons: Vec::new(),
            fov_polygons: alloc::vec![spec.ext_fov.clone()],
            rational_driver: lanes
                .iter()
                .filter(|l| l.def.rational_driver)
                .map(|l| RationalDriver {
                    lane: LaneId(l.def.id),
                    assumed: true,
                })
                .collect(),
            risk,
            curve_constant_speed: true,
            ego_lane: EGO_LANE,
            shared_lane: lanes.iter().find_map(|l| {
                l.def.join_s.map(|from_s| SharedLane {
                    lane: LaneId(l.def.id),
                    from_s,
                })
            }),
        };
        let contexts = precompute_contexts(&ego_path, &rules, &assumptions)?;
        Ok(Scenario {
            spec,
            ego_path,
            left_boundary,
            right_boundary,
            lanes,
            rules,
            assumptions,
            contexts,
            s_conflict,
        })
    }

    pub fn lane(&self, id: LaneId) -> Option<(&PathRef, f64)> {
        if id == EGO_LANE {
            return Some((&self.ego_path, 0.0));
        }
        self.lanes
            .iter()
            .find(|l| l.def.id == id.0)
            .map(|l| (&l.path, l.def.offset))
    }

    pub fn main_lane(&self) -> &Lane {
        self.lanes
            .iter()
            .find(|l| l.def.id == self.spec.junction.main_lane)
            .expect("validated main lane")
    }

    /// Perception reliability scripted for time `t`.
    pub fn p_rel(&self, t: f64) -> f64 {
        self.spec
            .reliability
            .iter()
            .filter(|r| r.t <= t)
            .last()
            .map(|r| reliability(&r.estimate))
            .unwrap_or(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActorState {
    pub id: ObjectId,
    pub lane: LaneId,
    /// Lane arc length of the actor center.
    pub s: f64,
    pub v: f64,
    pub a: f64,
    pub active: bool,
}

#[derive(Debug, Clone)]
pub struct WorldState {
    pub t: f64,
    pub ego: VehicleState,
    pub actors: Vec<ActorState>,
    pub rng: ChaCha8Rng,
}

fn jitter(rng: &mut ChaCha8Rng, half: f64) -> f64 {
    if half > 0.0 {
        rng.random_range(-half..=half)
    } else {
        0.0
    }
}

impl WorldState {
    /// Initial state with the seed perturbation applied.
    pub fn new(sc: &Scenario, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = sc.spec.perturbation;
        let s0 = sc.spec.ego_init.s + jitter(&mut rng, p.ego_s0);
        let v0 = (sc.spec.ego_init.v + jitter(&mut rng, p.ego_v0)).max(0.0);
        let vp = &sc.spec.vehicle;
        let sample = sc.ego_path.sample_at(s0);
        let ego = VehicleState {
            x: sample.x,
            y: sample.y,
            phi: sample.heading,
            v: v0,
            a: 0.0,
            delta: vp.steady_state_delta(sample.kappa, v0).clamp(-vp.delta_max, vp.delta_max),
        };
        let actors = sc
            .spec
            .actors
            .iter()
            .map(|a| ActorState {
                id: ObjectId(a.id),
                lane: LaneId(a.lane),
                s: a.s0 + jitter(&mut rng, p.actor_s0),
                v: (a.v0 + jitter(&mut rng, p.actor_v0)).max(0.0),
                a: 0.0,
                active: true,
            })
            .collect();
        WorldState { t: 0.0, ego, actors, rng }
    }

    pub fn actor_position(&self, sc: &Scenario, a: &ActorState) -> Vec2 {
        sc.lane(a.lane).map(|(p, _)| p.position_at(a.s)).unwrap_or_default()
    }

    /// Advances the actors and the ego by `dt` with constant ego controls.
    pub fn step(&mut self, sc: &Scenario, controls: (f64, f64), dt: f64, ego_s: f64) {
        let specs = &sc.spec.actors;
        let mut acc = alloc::vec![0.0; self.actors.len()];
        for (i, a) in self.actors.iter().enumerate() {
            if !a.active {
                continue;
            }
            if let ActorBehavior::IdmFollow = specs[i].behavior {
                let mut leader: Option<(f64, f64)> = None;
                for (j, b) in self.actors.iter().enumerate() {
                    if j == i || !b.active || b.lane != a.lane || b.s <= a.s {
                        continue;
                    }
                    let gap = b.s - a.s - 0.5 * (specs[i].length + specs[j].length);
                    if leader.is_none_or(|(g, _)| gap < g) {
                        leader = Some((gap, b.v));
                    }
                }
                // the ego counts as leader once it runs on this lane
                if let Some(lane) = sc.lanes.iter().find(|l| l.def.id == a.lane.0) {
                    if let Some(join) = lane.def.join_s {
                        let center = ego_s + sc.spec.vehicle.center_offset();
                        let m = center - lane.def.offset;
                        if ego_s >= join && m > a.s {
                            let gap = m - a.s - 0.5 * (specs[i].length + sc.spec.vehicle.length);
                            if leader.is_none_or(|(g, _)| gap < g) {
                                leader = Some((gap, self.ego.v));
                            }
                        }
                    }
                }
                acc[i] = sc.spec.idm.accel(a.v, specs[i].v0, leader);
            }
        }
        for (i, a) in self.actors.iter_mut().enumerate() {
            if !a.active {
                continue;
            }
            let v_new = (a.v + acc[i] * dt).max(0.0);
            a.s += 0.5 * (a.v + v_new) * dt;
            a.a = (v_new - a.v) / dt;
            a.v = v_new;
            if let ActorBehavior::TurnOffAt(at) = specs[i].behavior {
                if a.s >= at {
                    a.active = false;
                }
            }
        }
        let mut ego = bicycle_step(&self.ego, controls, dt, &sc.spec.vehicle);
        if ego.v < 0.0 {
            ego.v = 0.0;
            ego.a = ego.a.max(0.0);
        }
        self.ego = ego;
        self.t += dt;
    }
}

/// One entry of an object list, in lane coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub id: ObjectId,
    pub lane: LaneId,
    pub s: f64,
    pub v: f64,
    /// Time the state refers to.
    pub stamp: f64,
    pub position: Vec2,
    pub source: Source,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Perception {
    pub ego: Vec<Detection>,
    pub ext: Vec<Detection>,
}

/// Sensor origin: the ego bounding-box center.
pub fn sensor_origin(ego: &VehicleState, params: &VehicleParams) -> Vec2 {
    ego.position() + Vec2::from_angle(ego.phi) * params.center_offset()
}

/// Line of sight from the ego sensor to `p` inside the ego field of view.
pub fn ego_sees(sc: &Scenario, ego: &VehicleState, p: Vec2) -> bool {
    let o = sensor_origin(ego, &sc.spec.vehicle);
    sc.spec.ego_fov.transformed(o, ego.phi).contains(p)
        && !sc.spec.occlusions.iter().any(|poly| poly.intersects_segment(o, p))
}

pub fn ext_fault_offset(sc: &Scenario, t: f64) -> f64 {
    sc.spec
        .ext_faults
        .iter()
        .filter(|f| t >= f.t_from && t < f.t_to)
        .map(|f| f.offset)
        .sum()
}

/// Both object lists for the current frame.
pub fn sense(world: &mut WorldState, sc: &Scenario) -> Perception {
    let mut out = Perception::default();
    let noise = sc.spec.sensors.position_noise;
    let normal = Normal::new(0.0, noise.max(1e-12)).expect("finite std");
    let latency = sc.spec.sensors.latency_ext;
    let fault = ext_fault_offset(sc, world.t);
    for a in world.actors.iter().filter(|a| a.active) {
        let Some((path, _)) = sc.lane(a.lane) else { continue };
        let pos = path.position_at(a.s);
        if ego_sees(sc, &world.ego, pos) {
            let n = if noise > 0.0 { normal.sample(&mut world.rng) } else { 0.0 };
            out.ego.push(Detection {
                id: a.id,
                lane: a.lane,
                s: a.s + n,
                v: a.v,
                stamp: world.t,
                position: pos,
                source: Source::Ego,
            });
        }
        if sc.spec.ext_fov.contains(pos) {
            let n = if noise > 0.0 { normal.sample(&mut world.rng) } else { 0.0 };
            // state at the time of measurement
            let s_past = a.s - a.v * latency + 0.5 * a.a * latency * latency;
            let v_past = (a.v - a.a * latency).max(0.0);
            out.ext.push(Detection {
                id: a.id,
                lane: a.lane,
                s: s_past + n + fault,
                v: v_past,
                stamp: world.t - latency,
                position: path.position_at(s_past),
                source: Source::External,
            });
        }
    }
    out
}

/// Constant-velocity prediction re-anchored at `t_now`, in the common
/// coordinate.
pub fn to_prediction(d: &Detection, sc: &Scenario, t_now: f64) -> ObjectPrediction {
    let offset = sc.lane(d.lane).map(|(_, o)| o).unwrap_or(0.0);
    ObjectPrediction {
        id: d.id,
        lane: d.lane,
        s0: d.s + offset + d.v * (t_now - d.stamp) - sc.spec.vehicle.center_offset(),
        v: d.v,
        sigma0: sc.spec.sensors.sigma0,
        sigma_rate: sc.spec.sensors.sigma_rate,
        horizon: sc.rules.t_pred,
        source: d.source,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedObjects {
    pub objects: Vec<ObjectPrediction>,
    pub discrepancy: bool,
}

/// Nearest-neighbor association of the two lists; duplicates resolve to the
/// ego track and a pair further apart than `gate` flags a discrepancy, in
/// which case only the ego list is used.
pub fn associate(l_ego: &[ObjectPrediction], l_ext: &[ObjectPrediction], gate: f64, radius: f64) -> FusedObjects {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, e) in l_ego.iter().enumerate() {
        for (j, x) in l_ext.iter().enumerate() {
            if e.lane == x.lane {
                let d = (e.s0 - x.s0).abs();
                if d <= radius {
                    pairs.push((d, i, j));
                }
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_e = alloc::vec![false; l_ego.len()];
    let mut used_x = alloc::vec![false; l_ext.len()];
    let mut discrepancy = false;
    for (d, i, j) in pairs {
        if used_e[i] || used_x[j] {
            continue;
        }
        used_e[i] = true;
        used_x[j] = true;
        if d > gate {
            discrepancy = true;
        }
    }
    let mut objects: Vec<ObjectPrediction> = l_ego.to_vec();
    if !discrepancy {
        objects.extend(l_ext.iter().zip(&used_x).filter(|(_, u)| !**u).map(|(x, _)| x.clone()));
    }
    FusedObjects { objects, discrepancy }
}

/// Fuses the lists and keeps the objects relevant in `ctx`.
pub fn merge_object_lists(
    l_ego: &[ObjectPrediction],
    l_ext: &[ObjectPrediction],
    ctx: &SituationContext,
    assoc_gate: f64,
    assoc_radius: f64,
) -> FusedObjects {
    let mut fused = associate(l_ego, l_ext, assoc_gate, assoc_radius);
    fused.objects.retain(|o| !ctx.assumptions.assumes_rational(o.lane));
    fused
}

/// End of the combined field of view along the main lane, in the common
/// coordinate.
pub fn end_of_sight(world: &WorldState, sc: &Scenario, ext_trusted: bool) -> f64 {
    let lane = sc.main_lane();
    let m_join = sc.spec.junction.conflict[0];
    let step = sc.spec.sensors.eos_step;
    let n = (sc.spec.sensors.eos_search / step).ceil() as usize;
    let mut last = m_join;
    for k in 0..=n {
        let m = m_join - k as f64 * step;
        if m < 0.0 {
            break;
        }
        let p = lane.path.position_at(m);
        let visible = (ext_trusted && sc.spec.ext_fov.contains(p)) || ego_sees(sc, &world.ego, p);
        if !visible {
            break;
        }
        last = m;
    }
    last + lane.def.offset
}

/// Risk configuration of the current cycle with the end of sight placed.
pub fn cycle_risk_config(base: &RiskConfig, eos: f64) -> RiskConfig {
    let mut r = base.clone();
    r.eos_position = eos;
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preset;

    fn pilot() -> Scenario {
        Scenario::build(preset::pilot(preset::Category::NoTraffic)).unwrap()
    }

    #[test]
    fn constant_speed_kinematics() {
        let mut spec = preset::pilot(preset::Category::NoTraffic);
        spec.perturbation = Perturbation::default();
        spec.actors = alloc::vec![ActorSpec {
            id: 1,
            lane: spec.junction.main_lane,
            s0: 10.0,
            v0: 8.33,
            behavior: ActorBehavior::ConstantSpeed,
            length: 4.5,
            width: 1.8,
        }];
        let sc = Scenario::build(spec).unwrap();
        let mut w = WorldState::new(&sc, 1);
        w.step(&sc, (0.0, 0.0), 0.1, 0.0);
        assert!((w.actors[0].s - 10.833).abs() < 1e-12);
    }

    #[test]
    fn turn_off_removes_actor() {
        let mut spec = preset::pilot(preset::Category::NoTraffic);
        spec.perturbation = Perturbation::default();
        spec.actors = alloc::vec![ActorSpec {
            id: 1,
            lane: spec.junction.main_lane,
            s0: 59.5,
            v0: 8.33,
            behavior: ActorBehavior::TurnOffAt(60.0),
            length: 4.5,
            width: 1.8,
        }];
        let sc = Scenario::build(spec).unwrap();
        let mut w = WorldState::new(&sc, 1);
        w.step(&sc, (0.0, 0.0), 0.1, 0.0);
        assert!(!w.actors[0].active);
        let p = sense(&mut w, &sc);
        assert!(p.ego.is_empty() && p.ext.is_empty());
    }

    #[test]
    fn idm_stops_behind_stopped_leader() {
        let mut spec = preset::pilot(preset::Category::NoTraffic);
        spec.perturbation = Perturbation::default();
        let lane = spec.junction.main_lane;
        spec.actors = alloc::vec![
            ActorSpec { id: 1, lane, s0: 100.0, v0: 0.0, behavior: ActorBehavior::ConstantSpeed, length: 4.5, width: 1.8 },
            ActorSpec { id: 2, lane, s0: 30.0, v0: 8.33, behavior: ActorBehavior::IdmFollow, length: 4.5, width: 1.8 },
        ];
        let sc = Scenario::build(spec).unwrap();
        let mut w = WorldState::new(&sc, 1);
        let mut min_gap = f64::INFINITY;
        for _ in 0..1200 {
            w.step(&sc, (0.0, 0.0), 0.05, 0.0);
            min_gap = min_gap.min(w.actors[0].s - w.actors[1].s - 4.5);
            assert!(w.actors[1].v >= 0.0);
        }
        assert!(w.actors[1].v < 0.05, "v = {}", w.actors[1].v);
        assert!(min_gap >= 0.9 * sc.spec.idm.min_gap, "gap {min_gap}");
    }

    #[test]
    fn actors_never_move_backwards() {
        let sc = Scenario::build(preset::pilot(preset::Category::StopThenMerge)).unwrap();
        let mut w = WorldState::new(&sc, 3);
        for _ in 0..400 {
            let before: Vec<f64> = w.actors.iter().map(|a| a.s).collect();
            w.step(&sc, (0.0, 0.0), 0.05, 0.0);
            for (a, b) in w.actors.iter().zip(before) {
                assert!(a.s >= b);
            }
        }
    }

    fn single_actor(m: f64) -> (Scenario, WorldState) {
        let mut spec = preset::pilot(preset::Category::NoTraffic);
        spec.actors = alloc::vec![ActorSpec {
            id: 7,
            lane: spec.junction.main_lane,
            s0: m,
            v0: 8.33,
            behavior: ActorBehavior::ConstantSpeed,
            length: 4.5,
            width: 1.8,
        }];
        let sc = Scenario::build(spec).unwrap();
        let w = WorldState::new(&sc, 1);
        (sc, w)
    }

    #[test]
    fn occluded_actor_only_in_external_list() {
        let (sc, mut w) = single_actor(sc_main_join(&pilot()) - 40.0);
        let p = sense(&mut w, &sc);
        assert!(p.ego.is_empty(), "{:?}", p.ego);
        assert_eq!(p.ext.len(), 1);
    }

    #[test]
    fn actor_beyond_external_fov_is_in_neither_list() {
        let (sc, mut w) = single_actor(sc_main_join(&pilot()) - 90.0);
        let p = sense(&mut w, &sc);
        assert!(p.ego.is_empty() && p.ext.is_empty());
        let eos = end_of_sight(&w, &sc, true);
        assert!((eos - (sc.s_conflict - 85.0)).abs() <= 1.0, "eos {eos}");
    }

    #[test]
    fn mutual_fov_actor_in_both_lists() {
        let (sc, mut w) = single_actor(sc_main_join(&pilot()) - 40.0);
        // place the ego at the yield line, close to the main lane
        let s = sc.spec.junction.s_stop + 6.0;
        let p = sc.ego_path.sample_at(s);
        w.ego.x = p.x;
        w.ego.y = p.y;
        w.ego.phi = p.heading;
        let per = sense(&mut w, &sc);
        assert_eq!(per.ego.len(), 1);
        assert_eq!(per.ext.len(), 1);
    }

    fn sc_main_join(sc: &Scenario) -> f64 {
        sc.spec.junction.conflict[0]
    }

    #[test]
    fn external_state_lags_by_latency() {
        let (sc, mut w) = single_actor(sc_main_join(&pilot()) - 40.0);
        let truth_then = w.actors[0].s;
        w.step(&sc, (0.0, 0.0), 0.05, 0.0);
        let p = sense(&mut w, &sc);
        let lag = sc.spec.sensors.latency_ext;
        let expect = truth_then + w.actors[0].v * (0.05 - lag);
        assert!((p.ext[0].s - expect).abs() < 1e-9);
        assert!((p.ext[0].stamp - (w.t - lag)).abs() < 1e-12);
        let pred = to_prediction(&p.ext[0], &sc, w.t);
        let truth = w.actors[0].s + sc.main_lane().def.offset - sc.spec.vehicle.center_offset();
        assert!((pred.s0 - truth).abs() < 1e-9);
    }

    fn pred(id: u32, lane: u16, s0: f64, source: Source) -> ObjectPrediction {
        ObjectPrediction {
            id: ObjectId(id),
            lane: LaneId(lane),
            s0,
            v: 8.0,
            sigma0: 0.5,
            sigma_rate: 0.3,
            horizon: 10.0,
            source,
        }
    }

    #[test]
    fn association_examples() {
        let sc = pilot();
        let ctx = &sc.contexts[0];
        let e = [pred(1, 1, 20.0, Source::Ego)];
        let x = [pred(1, 1, 20.3, Source::External)];
        let f = merge_object_lists(&e, &x, ctx, 2.0, 10.0);
        assert!(!f.discrepancy);
        assert_eq!(f.objects.len(), 1);
        assert_eq!(f.objects[0].source, Source::Ego);

        let x = [pred(1, 1, 25.0, Source::External), pred(2, 1, 60.0, Source::External)];
        let f = merge_object_lists(&e, &x, ctx, 2.0, 10.0);
        assert!(f.discrepancy);
        assert_eq!(f.objects, e.to_vec());

        // oncoming lane under the rational-driver assumption
        let x = [pred(3, 2, 30.0, Source::External)];
        let f = merge_object_lists(&[], &x, ctx, 2.0, 10.0);
        assert!(f.objects.is_empty());
    }

    #[test]
    fn validation_names_field() {
        let mut spec = preset::pilot(preset::Category::NoTraffic);
        spec.actors.push(ActorSpec {
            id: 9,
            lane: 1,
            s0: 0.0,
            v0: -1.0,
            behavior: ActorBehavior::ConstantSpeed,
            length: 4.5,
            width: 1.8,
        });
        match Scenario::build(spec) {
            Err(Error::InvalidConfig { field, .. }) => assert!(field.contains("v0"), "{field}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn determinism_of_initial_perturbation() {
        let sc = Scenario::build(preset::pilot(preset::Category::MergeBehind)).unwrap();
        let a = WorldState::new(&sc, 11);
        let b = WorldState::new(&sc, 11);
        let c = WorldState::new(&sc, 12);
        assert_eq!(a.actors, b.actors);
        assert_eq!(a.ego, b.ego);
        assert_ne!(a.ego, c.ego);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]
        #[test]
        fn occlusion_soundness(m in 0.0f64..250.0, s in 5.0f64..80.0) {
            let (sc, mut w) = single_actor(m);
            let p = sc.ego_path.sample_at(s);
            w.ego.x = p.x;
            w.ego.y = p.y;
            w.ego.phi = p.heading;
            let pos = sc.main_lane().path.position_at(w.actors[0].s);
            let o = sensor_origin(&w.ego, &sc.spec.vehicle);
            let blocked = sc.spec.occlusions.iter().any(|poly| poly.intersects_segment(o, pos));
            let in_fov = sc.spec.ego_fov.transformed(o, w.ego.phi).contains(pos);
            let per = sense(&mut w, &sc);
            proptest::prop_assert_eq!(per.ego.len() == 1, in_fov && !blocked);
        }

        #[test]
        fn fused_list_has_no_duplicates(offsets in proptest::collection::vec(0.0f64..1.5, 1..6)) {
            let sc = pilot();
            let ctx = &sc.contexts[0];
            let e: Vec<ObjectPrediction> = offsets.iter().enumerate().map(|(i, _)| pred(i as u32, 1, 20.0 * i as f64, Source::Ego)).collect();
            let x: Vec<ObjectPrediction> = offsets.iter().enumerate().map(|(i, o)| pred(i as u32, 1, 20.0 * i as f64 + o, Source::External)).collect();
            let f = merge_object_lists(&e, &x, ctx, 2.0, 10.0);
            let mut ids: Vec<u32> = f.objects.iter().map(|o| o.id.0).collect();
            ids.sort();
            ids.dedup();
            proptest::prop_assert_eq!(ids.len(), f.objects.len());
            proptest::prop_assert!(!f.discrepancy);
        }
    }
}
