//! Built-in scenarios around a pilot-style junction: a side road reaching
//! the main road through a narrow S curve, a yield line at the start of the
//! second bend, and a wall hiding the main road to the left.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::geometry::{PathBuilder, Polygon, Vec2};
use crate::risk::ReliabilityEstimate;
use crate::world::{
    ActorBehavior, ActorSpec, EgoInit, ExtFault, IdmParams, JunctionDef, LaneDef, PathDef, PathPiece, Perturbation,
    ReliabilityStep, RulesDef, ScenarioSpec, SensorConfig,
};

pub const KAPPA: f64 = 0.08;
pub const RAMP: f64 = 3.0;
pub const APPROACH: f64 = 28.1825;
pub const MIDDLE: f64 = 4.0;
pub const MAIN_LANE: u16 = 1;
pub const ONCOMING_LANE: u16 = 2;
/// Main-lane arc length of the junction.
pub const M_JOIN: f64 = 400.0;
pub const V_SL: f64 = 8.33;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Category {
    NoTraffic,
    MergeBefore,
    MergeBehind,
    Gap,
    StopThenMerge,
    TurnOff,
    Adversarial,
    SCurve,
    Discrepancy,
}

impl Category {
    pub const ALL: [Category; 9] = [
        Category::NoTraffic,
        Category::MergeBefore,
        Category::MergeBehind,
        Category::Gap,
        Category::StopThenMerge,
        Category::TurnOff,
        Category::Adversarial,
        Category::SCurve,
        Category::Discrepancy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::NoTraffic => "no_traffic",
            Category::MergeBefore => "merge_before",
            Category::MergeBehind => "merge_behind",
            Category::Gap => "gap",
            Category::StopThenMerge => "stop_then_merge",
            Category::TurnOff => "turn_off",
            Category::Adversarial => "adversarial",
            Category::SCurve => "s_curve",
            Category::Discrepancy => "discrepancy",
        }
    }

    /// Maneuver category the run is expected to be classified as.
    pub fn expected(self) -> Option<&'static str> {
        match self {
            Category::NoTraffic | Category::SCurve => Some("no_traffic"),
            Category::MergeBefore => Some("merge_before"),
            Category::MergeBehind => Some("merge_behind"),
            Category::StopThenMerge => Some("stop_then_merge"),
            Category::Adversarial => Some("yielded"),
            _ => None,
        }
    }
}

fn arc_len() -> f64 {
    (core::f64::consts::FRAC_PI_4 - KAPPA * RAMP) / KAPPA
}

fn bend_len() -> f64 {
    2.0 * RAMP + arc_len()
}

pub fn s_stop() -> f64 {
    APPROACH + bend_len() + MIDDLE
}

/// Ego arc length where the route joins the main lane.
pub fn s_join() -> f64 {
    s_stop() + bend_len()
}

/// Curvature speed limit inside the bends.
pub fn v_curve() -> f64 {
    (1.45f64 / KAPPA).sqrt()
}

pub fn s_pga() -> f64 {
    s_join() + 8.0
}

fn ego_pieces() -> Vec<PathPiece> {
    let a = arc_len();
    alloc::vec![
        PathPiece::Straight { length: APPROACH },
        PathPiece::Clothoid { length: RAMP, kappa_end: KAPPA },
        PathPiece::Arc { length: a, kappa: KAPPA },
        PathPiece::Clothoid { length: RAMP, kappa_end: 0.0 },
        PathPiece::Straight { length: MIDDLE },
        PathPiece::Clothoid { length: RAMP, kappa_end: -KAPPA },
        PathPiece::Arc { length: a, kappa: -KAPPA },
        PathPiece::Clothoid { length: RAMP, kappa_end: 0.0 },
        PathPiece::Straight { length: 70.0 },
    ]
}

/// Start point placing the end of the S curve at the origin.
fn ego_start() -> Vec2 {
    let mut b = PathBuilder::new(Vec2::new(0.0, 0.0), 0.0, 0.05);
    for p in &ego_pieces()[..8] {
        b = match *p {
            PathPiece::Straight { length } => b.straight(length),
            PathPiece::Clothoid { length, kappa_end } => b.clothoid(length, kappa_end),
            PathPiece::Arc { length, kappa } => b.arc(length, kappa),
        };
    }
    -b.position()
}

fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Polygon {
    Polygon::new(alloc::vec![
        Vec2::new(x0, y0),
        Vec2::new(x1, y0),
        Vec2::new(x1, y1),
        Vec2::new(x0, y1),
    ])
}

fn octagon(r: f64) -> Polygon {
    Polygon::new(
        (0..8)
            .map(|k| Vec2::from_angle(core::f64::consts::FRAC_PI_4 * (k as f64 + 0.5)) * r)
            .collect(),
    )
}

fn main_actor(id: u32, t_arrive: f64, behavior: ActorBehavior) -> ActorSpec {
    ActorSpec {
        id,
        lane: MAIN_LANE,
        s0: M_JOIN - V_SL * t_arrive,
        v0: V_SL,
        behavior,
        length: 4.5,
        width: 1.8,
    }
}

/// Time at which the ego reaches the conflict point on the empty road.
pub const T_CONFLICT_FREE: f64 = 8.4;

fn actors_for(cat: Category) -> Vec<ActorSpec> {
    let t = T_CONFLICT_FREE;
    let cs = ActorBehavior::ConstantSpeed;
    match cat {
        Category::NoTraffic | Category::SCurve => Vec::new(),
        Category::MergeBefore => alloc::vec![main_actor(1, t + 6.0, cs)],
        Category::MergeBehind => alloc::vec![main_actor(1, t - 1.0, cs)],
        Category::Gap => alloc::vec![main_actor(1, t - 1.5, cs), main_actor(2, t + 7.0, cs)],
        Category::StopThenMerge => (0..4)
            .map(|k| main_actor(1 + k, t - 1.0 + 2.2 * k as f64, if k == 0 { cs } else { ActorBehavior::IdmFollow }))
            .collect(),
        Category::TurnOff => alloc::vec![main_actor(1, t + 1.0, ActorBehavior::TurnOffAt(M_JOIN - 20.0))],
        Category::Adversarial => (0..24).map(|k| main_actor(1 + k, t - 6.0 + 2.0 * k as f64, cs)).collect(),
        Category::Discrepancy => alloc::vec![main_actor(1, t + 6.0, cs)],
    }
}

/// The pilot junction populated for `cat`.
pub fn pilot(cat: Category) -> ScenarioSpec {
    let sj = s_join();
    let mut spec = ScenarioSpec {
        name: String::from(cat.as_str()),
        category: cat.expected().map(|s| s.to_string()),
        seed: 1,
        duration: 40.0,
        plan_hz: 10.0,
        physics_step: 0.05,
        ego_path: PathDef::Pieces {
            start: ego_start(),
            heading: 0.0,
            pieces: ego_pieces(),
            resample_step: 0.1,
        },
        ego_init: EgoInit { s: 24.0, v: v_curve() },
        lane_width: 3.5,
        lanes: alloc::vec![
            LaneDef {
                id: MAIN_LANE,
                path: PathDef::Pieces {
                    start: Vec2::new(-M_JOIN, 0.0),
                    heading: 0.0,
                    pieces: alloc::vec![PathPiece::Straight { length: M_JOIN + 120.0 }],
                    resample_step: 0.5,
                },
                offset: sj - M_JOIN,
                join_s: Some(sj),
                rational_driver: false,
            },
            LaneDef {
                id: ONCOMING_LANE,
                path: PathDef::Pieces {
                    start: Vec2::new(120.0, 3.5),
                    heading: core::f64::consts::PI,
                    pieces: alloc::vec![PathPiece::Straight { length: 300.0 }],
                    resample_step: 0.5,
                },
                offset: sj - 120.0,
                join_s: None,
                rational_driver: true,
            },
        ],
        junction: JunctionDef {
            s_stop: s_stop(),
            s_pga: s_pga(),
            main_lane: MAIN_LANE,
            conflict: [M_JOIN, M_JOIN + 8.0],
        },
        rules: RulesDef::default(),
        risk: Default::default(),
        occlusions: alloc::vec![rect(-400.0, -9.0, -15.0, -3.0)],
        ego_fov: octagon(60.0),
        ext_fov: rect(-85.0, -2.5, 40.0, 6.0),
        actors: actors_for(cat),
        sensors: SensorConfig::default(),
        idm: IdmParams::default(),
        perturbation: Perturbation {
            ego_v0: 0.1,
            ego_s0: 0.0,
            actor_v0: 0.2,
            actor_s0: 2.0,
        },
        reliability: alloc::vec![ReliabilityStep {
            t: 0.0,
            estimate: ReliabilityEstimate { beta_a: 8.0, beta_b: 2.0, alpha: 0.5 },
        }],
        ext_faults: Vec::new(),
        vehicle: Default::default(),
        tracker: Default::default(),
        planner: Default::default(),
        sampler: Default::default(),
    };
    match cat {
        Category::Adversarial => spec.duration = 25.0,
        Category::SCurve => {
            spec.ego_init = EgoInit { s: 24.0, v: v_curve() };
            spec.perturbation = Perturbation::default();
        }
        Category::Discrepancy => {
            spec.ext_faults = alloc::vec![ExtFault { t_from: 2.0, t_to: 40.0, offset: 5.0 }];
        }
        _ => {}
    }
    spec
}

/// Every built-in scenario.
pub fn all() -> Vec<ScenarioSpec> {
    Category::ALL.iter().map(|c| pilot(*c)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::Scenario;

    #[test]
    fn geometry_lines_up() {
        let sc = Scenario::build(pilot(Category::NoTraffic)).unwrap();
        let p = sc.ego_path.sample_at(s_join());
        assert!(p.x.abs() < 0.05 && p.y.abs() < 0.05, "{p:?}");
        assert!(p.heading.abs() < 1e-3);
        assert!((s_stop() - 45.0).abs() < 1e-3);
        assert!((bend_len() - 12.8175).abs() < 1e-3);
        let k = sc.ego_path.kappa_at(s_stop() + RAMP + 0.5 * arc_len());
        assert!((k + KAPPA).abs() < 2e-3, "{k}");
    }

    #[test]
    fn all_presets_build() {
        for spec in all() {
            Scenario::build(spec).unwrap();
        }
    }
}
