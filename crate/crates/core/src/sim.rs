//! Closed loop: perception, context update, behavior generation, planning,
//! lateral tracking and physics.

use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::context::{
    generate_behavior_options, select_and_update_context, BehaviorKind, BehaviorOption, ContextKind, GenerationInput,
};
use crate::error::Result;
use crate::eval::{d_lane, vehicle_box};
use crate::planner::{check_pnr_consistency, plan, LongitudinalState, LongitudinalTrajectory, TrajectorySegment};
use crate::risk::{make_virtual_eos_object, ObjectPrediction};
use crate::tracking::{lateral_accel, LateralTracker, TrackingProblem};
use crate::world::{associate, end_of_sight, merge_object_lists, sense, to_prediction, Scenario, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActorFrame {
    pub id: u32,
    pub lane: u16,
    /// Center position in the common coordinate.
    pub s_common: f64,
    pub x: f64,
    pub y: f64,
    pub v: f64,
    pub active: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub phi: f64,
    pub v: f64,
    pub a: f64,
    pub delta: f64,
    pub a_perp: f64,
    pub d_perp: f64,
    pub s: f64,
    pub d_lane: f64,
    pub actors: Vec<ActorFrame>,
    pub ego_list: Vec<u32>,
    pub ext_list: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub index: usize,
    pub kind: BehaviorKind,
    pub valid: bool,
    pub reason: Option<String>,
    pub cost: f64,
    pub p_risk: f64,
    pub t_pnr: Option<f64>,
    pub t_pga: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub t: f64,
    pub x0: LongitudinalState,
    pub context: usize,
    pub context_kind: ContextKind,
    pub n_options: usize,
    pub n_evaluated: usize,
    pub option: BehaviorKind,
    pub seeded: bool,
    pub cost: f64,
    pub p_risk: f64,
    pub p_rel: f64,
    pub t_pnr: Option<f64>,
    pub t_pga: Option<f64>,
    pub discrepancy: bool,
    pub eos: f64,
    pub n_objects: usize,
    pub max_jerk_plan: f64,
    pub end_state: LongitudinalState,
    /// Constant `a_min` braking from any planned state before the PNR
    /// stops short of the yield line.
    pub pnr_ok: bool,
    pub durations: Vec<f64>,
    pub coeffs: Vec<[f64; 6]>,
    pub tracker_stall: bool,
    pub max_a_perp_rollout: f64,
    pub candidates: Vec<CandidateSummary>,
}

impl CycleRecord {
    pub fn trajectory(&self) -> LongitudinalTrajectory {
        let mut traj = LongitudinalTrajectory::from_segments(
            self.durations
                .iter()
                .zip(&self.coeffs)
                .map(|(d, c)| TrajectorySegment {
                    coeffs: *c,
                    duration: *d,
                })
                .collect(),
        );
        traj.t_pnr = self.t_pnr;
        traj.t_pga = self.t_pga;
        traj
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Completed,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimLog {
    pub name: String,
    pub seed: u64,
    pub frames: Vec<Frame>,
    pub cycles: Vec<CycleRecord>,
    pub termination: Termination,
    /// Wall-clock planning time per cycle, seconds.
    pub plan_times: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub record_candidates: bool,
    /// Distance past the point of guaranteed arrival that ends the run.
    pub run_out: f64,
    /// Planning restarts from the measured state beyond these deviations.
    pub resync_s: f64,
    pub resync_v: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            record_candidates: true,
            run_out: 15.0,
            resync_s: 0.5,
            resync_v: 0.5,
        }
    }
}

fn frame(world: &WorldState, sc: &Scenario, ego_list: Vec<u32>, ext_list: Vec<u32>) -> Result<Frame> {
    let e = &world.ego;
    let pose = sc.ego_path.project(e.position())?;
    let dl = d_lane(&vehicle_box(e, &sc.spec.vehicle), &sc.left_boundary, &sc.right_boundary)?;
    let actors = world
        .actors
        .iter()
        .map(|a| {
            let pos = world.actor_position(sc, a);
            let off = sc.lane(a.lane).map(|(_, o)| o).unwrap_or(0.0);
            ActorFrame {
                id: a.id.0,
                lane: a.lane.0,
                s_common: a.s + off,
                x: pos.x,
                y: pos.y,
                v: a.v,
                active: a.active,
            }
        })
        .collect();
    Ok(Frame {
        t: world.t,
        x: e.x,
        y: e.y,
        phi: e.phi,
        v: e.v,
        a: e.a,
        delta: e.delta,
        a_perp: lateral_accel(e, &sc.spec.vehicle),
        d_perp: pose.d,
        s: pose.s,
        d_lane: dl,
        actors,
        ego_list,
        ext_list,
    })
}

/// Runs the closed loop for one seed. `clock` returns seconds and is only
/// used to time the planning step.
pub fn simulate(sc: &Scenario, seed: u64, opts: &SimOptions, clock: &mut dyn FnMut() -> f64) -> Result<SimLog> {
    let spec = &sc.spec;
    let dt = spec.physics_step;
    let steps = (1.0 / (spec.plan_hz * dt)).round() as usize;
    let period = steps as f64 * dt;
    let mut world = WorldState::new(sc, seed);
    let mut tracker = LateralTracker::new(spec.tracker.clone(), spec.vehicle);
    let mut frames = Vec::new();
    let mut cycles: Vec<CycleRecord> = Vec::new();
    let mut plan_times = Vec::new();
    let mut prev: Option<(LongitudinalTrajectory, BehaviorOption, usize)> = None;
    let gate = spec.sensors.assoc_gate;
    let radius = spec.sensors.assoc_radius;
    let end_s = (spec.junction.s_pga + opts.run_out).min(sc.ego_path.total_length() - 1.0);
    let n_cycles = (spec.duration / period).round() as usize;
    let mut termination = Termination::Timeout;

    let per = sense(&mut world, sc);
    frames.push(frame(
        &world,
        sc,
        per.ego.iter().map(|d| d.id.0).collect(),
        per.ext.iter().map(|d| d.id.0).collect(),
    )?);

    for _ in 0..n_cycles {
        let t = world.t;
        let pose = sc.ego_path.project(world.ego.position())?;
        let measured = LongitudinalState::new(pose.s, world.ego.v, world.ego.a);
        let x0 = match &prev {
            Some((traj, _, _)) => {
                let p = traj.state_at(period);
                if (p.s - measured.s).abs() <= opts.resync_s && (p.v - measured.v).abs() <= opts.resync_v {
                    p
                } else {
                    measured
                }
            }
            None => measured,
        };

        let per = sense(&mut world, sc);
        let l_ego: Vec<ObjectPrediction> = per.ego.iter().map(|d| to_prediction(d, sc, t)).collect();
        let l_ext: Vec<ObjectPrediction> = per.ext.iter().map(|d| to_prediction(d, sc, t)).collect();
        let p_rel = sc.p_rel(t);

        let started = clock();
        let union = associate(&l_ego, &l_ext, gate, radius);
        let mut ctx = select_and_update_context(&sc.contexts, &x0, &union.objects)?;
        let ctx_index = sc
            .contexts
            .iter()
            .position(|c| c.interval == ctx.interval)
            .unwrap_or(0);
        let fused = merge_object_lists(&l_ego, &l_ext, &ctx, gate, radius);
        let eos = end_of_sight(&world, sc, !fused.discrepancy);
        ctx.assumptions.risk.eos_position = eos;
        let mut objects = fused.objects;
        if ctx.kind == ContextKind::Merge {
            if let Some(v) = make_virtual_eos_object(&ctx.assumptions.risk, &objects) {
                objects.push(v);
            }
        }
        let seed_option = prev
            .as_ref()
            .filter(|(_, _, c)| *c == ctx_index)
            .and_then(|(_, o, _)| o.advance(x0.s, period));
        let input = GenerationInput {
            ego: x0,
            objects: &objects,
            t_now: t,
            seed: seed_option.as_ref(),
        };
        ctx.behaviors = generate_behavior_options(&ctx, &input, &spec.sampler);
        let outcome = plan(&ctx, x0, &objects, p_rel, &spec.planner)?;
        plan_times.push(clock() - started);

        let traj = &outcome.trajectory;
        let pnr_ok = match ctx.constraints.s_stop {
            Some(s_stop) => check_pnr_consistency(traj, s_stop, ctx.constraints.a_min, 0.01),
            None => true,
        };
        let stalls_before = tracker.stalls;
        let controls = tracker.step(traj, &sc.ego_path, &world.ego, steps);
        let problem = TrackingProblem::new(traj, &sc.ego_path, &world.ego, &tracker.cfg, &tracker.params);
        let max_a_perp_rollout = problem
            .rollout(&controls)
            .iter()
            .map(|s| lateral_accel(s, &spec.vehicle).abs())
            .fold(0.0, f64::max);
        let winner = outcome.winner().cloned();
        cycles.push(CycleRecord {
            t,
            x0,
            context: ctx_index,
            context_kind: ctx.kind,
            n_options: ctx.behaviors.len(),
            n_evaluated: outcome.candidates.len(),
            option: outcome.option.kind,
            seeded: outcome.option.seeded,
            cost: outcome.cost,
            p_risk: outcome.p_risk,
            p_rel,
            t_pnr: traj.t_pnr,
            t_pga: traj.t_pga,
            discrepancy: fused.discrepancy,
            eos,
            n_objects: objects.len(),
            max_jerk_plan: traj.max_abs_jerk(),
            end_state: traj.end_state(),
            pnr_ok,
            durations: winner.as_ref().map(|w| w.durations.clone()).unwrap_or_default(),
            coeffs: winner.as_ref().map(|w| w.coeffs.clone()).unwrap_or_default(),
            tracker_stall: tracker.stalls > stalls_before,
            max_a_perp_rollout,
            candidates: if opts.record_candidates {
                outcome
                    .candidates
                    .iter()
                    .map(|c| CandidateSummary {
                        index: c.index,
                        kind: c.kind,
                        valid: c.valid,
                        reason: c.reason.clone(),
                        cost: c.cost,
                        p_risk: c.p_risk,
                        t_pnr: c.t_pnr,
                        t_pga: c.t_pga,
                    })
                    .collect()
            } else {
                Vec::new()
            },
        });

        for c in controls.iter().take(steps) {
            world.step(sc, (c[0], c[1]), dt, pose.s);
            let per = sense(&mut world, sc);
            frames.push(frame(
                &world,
                sc,
                per.ego.iter().map(|d| d.id.0).collect(),
                per.ext.iter().map(|d| d.id.0).collect(),
            )?);
        }
        prev = Some((outcome.trajectory, outcome.option, ctx_index));
        if frames.last().is_some_and(|f| f.s >= end_s) {
            termination = Termination::Completed;
            break;
        }
    }
    Ok(SimLog {
        name: spec.name.clone(),
        seed,
        frames,
        cycles,
        termination,
        plan_times,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{categorize_maneuver, run_metrics, ManeuverCategory};
    use crate::preset::{pilot, Category};

    fn counter() -> impl FnMut() -> f64 {
        let mut t = 0.0;
        move || {
            t += 1e-3;
            t
        }
    }

    fn run(cat: Category, seed: u64) -> (Scenario, SimLog) {
        let sc = Scenario::build(pilot(cat)).unwrap();
        let log = simulate(&sc, seed, &SimOptions::default(), &mut counter()).unwrap();
        (sc, log)
    }

    #[test]
    fn empty_road_merges() {
        let (sc, log) = run(Category::NoTraffic, 1);
        let m = run_metrics(&log, &sc, 0.3);
        assert_eq!(log.termination, Termination::Completed);
        assert_eq!(categorize_maneuver(&log, &sc).unwrap().category, ManeuverCategory::NoTraffic);
        assert!(m.min_d_lane > 0.0);
    }

    #[test]
    fn identical_seed_identical_log() {
        let (_, a) = run(Category::MergeBehind, 4);
        let (_, b) = run(Category::MergeBehind, 4);
        assert_eq!(a.frames, b.frames);
        assert_eq!(a.cycles, b.cycles);
    }
}

