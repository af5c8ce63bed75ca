//! Acceptance checks for the planner stack, shared by the `acceptance`
//! command and the integration test.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use junction_core::context::{BehaviorKind, BehaviorOption, ContextKind};
use junction_core::eval::{jerk_stats, ManeuverCategory};
use junction_core::planner::{annotate, solve_min_jerk_segment, LongitudinalState, LongitudinalTrajectory, TrajectorySegment};
use junction_core::risk::{
    aggregate_risk, combine_object_risks, object_interval_risk, LaneId, ObjectId, ObjectPrediction, RiskConfig, Source,
};
use junction_core::sim::SimOptions;
use junction_core::tracking::{TrackingProblem, VehicleState};
use junction_core::world::Scenario;
use nalgebra::{Matrix3, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::io::{load_scenario, read_json};
use crate::output::{write_candidates_json, write_metrics_json, write_trajectory_csv};
use crate::runner::{run_once, run_with, with_pool, RunOutput};

/// Comfort bound on the jerk, m/s³.
pub const JERK_COMFORT: f64 = 1.5;
/// Lateral acceleration bound and its tolerance.
pub const A_PERP_MAX: f64 = 1.45;
pub const A_PERP_TOL: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteScenarios {
    pub no_traffic: PathBuf,
    pub merge_before: PathBuf,
    pub merge_behind: PathBuf,
    pub stop_then_merge: PathBuf,
    pub adversarial: PathBuf,
    pub s_curve: PathBuf,
    /// Further nominal scenarios checked for lane keeping and comfort.
    pub extra: Vec<PathBuf>,
}

impl Default for SuiteScenarios {
    fn default() -> Self {
        SuiteScenarios {
            no_traffic: "no_traffic.json".into(),
            merge_before: "merge_before.json".into(),
            merge_behind: "merge_behind.json".into(),
            stop_then_merge: "stop_then_merge.json".into(),
            adversarial: "adversarial.json".into(),
            s_curve: "s_curve.json".into(),
            extra: vec!["gap.json".into(), "turn_off.json".into(), "discrepancy.json".into()],
        }
    }
}

/// Sizes and inputs of the acceptance run. Scenario paths are relative to
/// the suite file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Suite {
    pub seed: u64,
    /// Perturbed repetitions per scenario.
    pub seeds: usize,
    pub ocp_pairs: usize,
    pub qp_steps: usize,
    pub ocp_time_limit: f64,
    pub mc_samples: usize,
    pub mc_cases: usize,
    pub fuzz_inputs: usize,
    pub perf_min_options: usize,
    /// Sequential repetitions timed for the performance check.
    pub perf_runs: usize,
    pub perf_target_ms: f64,
    pub perf_gate_ms: f64,
    pub gradient_problems: usize,
    pub scenarios: SuiteScenarios,
}

impl Default for Suite {
    fn default() -> Self {
        Suite {
            seed: 1,
            seeds: 10,
            ocp_pairs: 500,
            qp_steps: 1000,
            ocp_time_limit: 60.0,
            mc_samples: 100_000,
            mc_cases: 8,
            fuzz_inputs: 10_000,
            perf_min_options: 100,
            perf_runs: 3,
            perf_target_ms: 16.0,
            perf_gate_ms: 50.0,
            gradient_problems: 12,
            scenarios: SuiteScenarios::default(),
        }
    }
}

pub fn load_suite(path: &Path) -> Result<(Suite, PathBuf)> {
    let suite: Suite = read_json(path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((suite, base))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, pass: bool, detail: String) -> Self {
        Check { name, pass, detail }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", if self.pass { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

// ---------------------------------------------------------------- OCP oracle

/// Discrete minimum-jerk problem over `n` piecewise-constant jerk steps:
/// the least-norm control meeting the end state exactly.
pub fn qp_min_jerk(x0: LongitudinalState, xf: LongitudinalState, t: f64, n: usize) -> Vec<f64> {
    let h = t / n as f64;
    let column = |k: usize| {
        let r = t - (k + 1) as f64 * h;
        Vector3::new(h * h * h / 6.0 + h * h * r / 2.0 + h * r * r / 2.0, h * h / 2.0 + h * r, h)
    };
    let mut g = Matrix3::zeros();
    for k in 0..n {
        let c = column(k);
        g += c * c.transpose();
    }
    let free = Vector3::new(x0.s + x0.v * t + 0.5 * x0.a * t * t, x0.v + x0.a * t, x0.a);
    let b = Vector3::new(xf.s, xf.v, xf.a) - free;
    let lambda = g.lu().solve(&b).unwrap_or_else(Vector3::zeros);
    (0..n).map(|k| column(k).dot(&lambda)).collect()
}

fn zoh_step(x: LongitudinalState, u: f64, h: f64) -> LongitudinalState {
    LongitudinalState::new(
        x.s + x.v * h + x.a * h * h / 2.0 + u * h * h * h / 6.0,
        x.v + x.a * h + u * h * h / 2.0,
        x.a + u * h,
    )
}

pub fn ocp_oracle(suite: &Suite) -> Check {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(suite.seed);
    let n = suite.qp_steps;
    let mut worst_state: f64 = 0.0;
    let mut worst_cost: f64 = 0.0;
    let mut failures = 0;
    for _ in 0..suite.ocp_pairs {
        let t = rng.random_range(2.0..10.0);
        let x0 = LongitudinalState::new(0.0, rng.random_range(0.0..12.0), rng.random_range(-2.0..2.0));
        let vf = rng.random_range(0.0..12.0);
        let sf = 0.5 * (x0.v + vf) * t * rng.random_range(0.7..1.3);
        let xf = LongitudinalState::new(sf, vf, rng.random_range(-1.5..1.5));
        let Ok(seg) = solve_min_jerk_segment(x0, xf, t) else {
            failures += 1;
            continue;
        };
        let u = qp_min_jerk(x0, xf, t, n);
        let h = t / n as f64;
        let mut x = x0;
        for (k, uk) in u.iter().enumerate() {
            x = zoh_step(x, *uk, h);
            let y = seg.state((k + 1) as f64 * h);
            worst_state = worst_state.max((x.s - y.s).abs()).max((x.v - y.v).abs()).max((x.a - y.a).abs());
        }
        let cost_qp: f64 = 0.5 * u.iter().map(|v| v * v * h).sum::<f64>();
        let cost = seg.jerk_cost();
        worst_cost = worst_cost.max((cost_qp - cost).abs() / cost.max(1e-12));
    }
    let elapsed = started.elapsed().as_secs_f64();
    let pass = failures == 0 && worst_state <= 1e-3 && worst_cost <= 1e-3 && elapsed <= suite.ocp_time_limit;
    Check::new(
        "ocp_oracle",
        pass,
        format!(
            "{} pairs vs {}-step jerk QP: max state error {worst_state:.2e} (<= 1e-3), max cost deviation {:.4}% (<= 0.1%), {failures} solver failures, {elapsed:.2} s (<= {} s)",
            suite.ocp_pairs,
            n,
            100.0 * worst_cost,
            suite.ocp_time_limit
        ),
    )
}

// ---------------------------------------------------------------- risk

fn random_trajectory(rng: &mut ChaCha8Rng) -> LongitudinalTrajectory {
    let t = rng.random_range(2.0..10.0);
    let x0 = LongitudinalState::new(rng.random_range(0.0..50.0), rng.random_range(0.0..10.0), rng.random_range(-1.0..1.0));
    let vf = rng.random_range(0.0..10.0);
    let xf = LongitudinalState::new(x0.s + 0.5 * (x0.v + vf) * t, vf, 0.0);
    LongitudinalTrajectory::from_segments(vec![solve_min_jerk_segment(x0, xf, t).expect("positive duration")])
}

fn random_object(rng: &mut ChaCha8Rng, id: u32, near: f64) -> ObjectPrediction {
    ObjectPrediction {
        id: ObjectId(id),
        lane: LaneId(1),
        s0: near + rng.random_range(-40.0..40.0),
        v: rng.random_range(0.0..12.0),
        sigma0: rng.random_range(0.3..3.0),
        sigma_rate: rng.random_range(0.0..1.0),
        horizon: 10.0,
        source: Source::External,
    }
}

pub fn risk_monte_carlo(suite: &Suite) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(suite.seed ^ 0x5eed);
    let cfg = RiskConfig::default();
    let n = suite.mc_samples;
    let mut worst_z: f64 = 0.0;
    let mut checked = 0;
    for case in 0..suite.mc_cases {
        let traj = random_trajectory(&mut rng);
        let ego0 = traj.start_state();
        let mut obj = random_object(&mut rng, case as u32, ego0.s);
        // keep the object close enough for non-trivial overlap
        obj.s0 = ego0.s + rng.random_range(-10.0..10.0);
        obj.v = (ego0.v + rng.random_range(-2.0..2.0)).max(0.0);
        let scans = 12;
        for k in 0..scans {
            let t = traj.duration() * k as f64 / (scans - 1) as f64;
            let p = object_interval_risk(&traj, &obj, &cfg, t);
            let ego = traj.state_at(t);
            let v_obj = obj.v;
            let lo = ego.s - (cfg.s_minus_0 + cfg.headway * (v_obj - ego.v).max(0.0));
            let hi = ego.s + (cfg.s_plus_0 + cfg.headway * (ego.v - v_obj).max(0.0));
            let dist = Normal::new(obj.s0 + obj.v * t, obj.sigma0 + obj.sigma_rate * t).expect("positive sigma");
            let hits = (0..n).filter(|_| (lo..=hi).contains(&dist.sample(&mut rng))).count();
            let mc = hits as f64 / n as f64;
            let var = (p * (1.0 - p)).max(1.0 / n as f64);
            let se = (var / n as f64).sqrt();
            worst_z = worst_z.max((mc - p).abs() / se);
            checked += 1;
        }
    }
    Check::new(
        "risk.monte_carlo",
        worst_z <= 3.0,
        format!("{checked} scan times x {n} samples: worst deviation {worst_z:.2} standard errors (<= 3)"),
    )
}

pub fn risk_order_invariance(suite: &Suite) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(suite.seed ^ 0x0de7);
    let cfg = RiskConfig::default();
    let mut mismatches = 0;
    let trials = 500;
    for _ in 0..trials {
        let k = rng.random_range(2..10);
        let mut p: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
        let base = combine_object_risks(&p);
        let mut traj = random_trajectory(&mut rng);
        traj.t_pnr = Some(0.0);
        traj.t_pga = Some(traj.duration());
        let s0 = traj.start_state().s;
        let mut objs: Vec<ObjectPrediction> = (0..k).map(|i| random_object(&mut rng, i as u32, s0)).collect();
        let p_rel = rng.random::<f64>();
        let agg = aggregate_risk(&traj, &objs, &cfg, p_rel).expect("annotated");
        for _ in 0..8 {
            p.shuffle(&mut rng);
            objs.shuffle(&mut rng);
            if combine_object_risks(&p).to_bits() != base.to_bits() {
                mismatches += 1;
            }
            if aggregate_risk(&traj, &objs, &cfg, p_rel).expect("annotated").to_bits() != agg.to_bits() {
                mismatches += 1;
            }
        }
    }
    Check::new(
        "risk.order_invariance",
        mismatches == 0,
        format!("{trials} object sets x 8 permutations: {mismatches} bitwise mismatches"),
    )
}

pub fn risk_fuzz(suite: &Suite) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(suite.seed ^ 0xf022);
    let mut bad = 0;
    let mut errors = 0;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..suite.fuzz_inputs {
        let mut traj = random_trajectory(&mut rng);
        let d = traj.duration();
        traj.t_pnr = Some(rng.random_range(0.0..d));
        traj.t_pga = Some(rng.random_range(0.0..d));
        let cfg = RiskConfig {
            s_minus_0: rng.random_range(0.0..10.0),
            s_plus_0: rng.random_range(0.0..10.0),
            headway: rng.random_range(0.0..3.0),
            time_step: rng.random_range(0.02..1.0),
            ..RiskConfig::default()
        };
        let k = rng.random_range(0..6);
        let objs: Vec<ObjectPrediction> = (0..k)
            .map(|i| ObjectPrediction {
                id: ObjectId(i),
                lane: LaneId(1),
                s0: rng.random_range(-500.0..500.0),
                v: rng.random_range(0.0..40.0),
                sigma0: 10f64.powf(rng.random_range(-3.0..1.7)),
                sigma_rate: rng.random_range(0.0..5.0),
                horizon: rng.random_range(0.0..20.0),
                source: Source::Ego,
            })
            .collect();
        match aggregate_risk(&traj, &objs, &cfg, rng.random::<f64>()) {
            Ok(p) => {
                lo = lo.min(p);
                hi = hi.max(p);
                if !(0.0..=1.0).contains(&p) {
                    bad += 1;
                }
            }
            Err(_) => errors += 1,
        }
    }
    Check::new(
        "risk.fuzz",
        bad == 0 && errors == 0,
        format!(
            "{} random inputs: p_risk range [{lo:.3e}, {hi:.6}], {bad} outside [0, 1], {errors} errors",
            suite.fuzz_inputs
        ),
    )
}

/// Braking trajectories that stop short of the yield line, scored with
/// perfect perception against dense traffic.
pub fn formal_safety(suite: &Suite, sc: &Scenario) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(suite.seed ^ 0x5afe);
    let Some(ctx) = sc.contexts.iter().find(|c| c.kind == ContextKind::Merge) else {
        return Check::new("formal_safety", false, String::from("scenario has no merge context"));
    };
    let s_stop = ctx.constraints.s_stop.unwrap_or(sc.spec.junction.s_stop);
    let a_min = ctx.constraints.a_min;
    let option = BehaviorOption::new(BehaviorKind::GentleStop, 1, Vec::new());
    let trials = 1000;
    let mut nonzero = 0;
    let mut outside = 0;
    for _ in 0..trials {
        let s0 = s_stop - rng.random_range(2.0..30.0);
        let room = s_stop - s0 - rng.random_range(0.0..1.5);
        let v0 = rng.random_range(0.5..(2.0 * a_min.abs() * room).sqrt());
        let a = -v0 * v0 / (2.0 * room);
        let brake = TrajectorySegment::constant_accel(LongitudinalState::new(s0, v0, a), a, v0 / -a).expect("positive");
        let mut traj = LongitudinalTrajectory::from_segments(vec![brake]);
        annotate(&mut traj, &option, ctx, 0.01);
        let inside = (0..=200).all(|k| {
            let x = traj.state_at(traj.duration() * k as f64 / 200.0);
            x.s + x.v * x.v / (2.0 * a_min.abs()) <= s_stop
        });
        if !inside {
            outside += 1;
            continue;
        }
        let objs: Vec<ObjectPrediction> = (0..10)
            .map(|i| random_object(&mut rng, i, ctx.assumptions.risk.eos_conflict))
            .collect();
        let p = aggregate_risk(&traj, &objs, &ctx.assumptions.risk, 1.0);
        if p.map_or(true, |p| p != 0.0) {
            nonzero += 1;
        }
    }
    Check::new(
        "formal_safety",
        nonzero == 0 && outside == 0,
        format!("{trials} safe-set trajectories with p_rel = 1: {nonzero} with p_risk != 0, {outside} left the safe set"),
    )
}

// ---------------------------------------------------------------- closed loop

#[derive(Debug)]
pub struct Batch {
    pub key: String,
    pub scenario: Scenario,
    pub runs: Vec<RunOutput>,
}

fn load(base: &Path, p: &Path) -> Result<Scenario> {
    Ok(Scenario::build(load_scenario(&base.join(p))?)?)
}

/// Loads every suite scenario and simulates `suite.seeds` repetitions of each.
pub fn simulate_suite(suite: &Suite, base: &Path) -> Result<Vec<Batch>> {
    let s = &suite.scenarios;
    let mut named: Vec<(String, &PathBuf)> = vec![
        ("no_traffic".into(), &s.no_traffic),
        ("merge_before".into(), &s.merge_before),
        ("merge_behind".into(), &s.merge_behind),
        ("stop_then_merge".into(), &s.stop_then_merge),
        ("adversarial".into(), &s.adversarial),
        ("s_curve".into(), &s.s_curve),
    ];
    for p in &s.extra {
        let stem = p.file_stem().and_then(|x| x.to_str()).unwrap_or("extra").to_string();
        named.push((stem, p));
    }
    let mut batches = Vec::new();
    for (key, p) in named {
        batches.push(Batch {
            key,
            scenario: load(base, p)?,
            runs: Vec::new(),
        });
    }
    let jobs: Vec<(usize, u64)> = (0..batches.len())
        .flat_map(|b| (0..suite.seeds as u64).map(move |k| (b, k)))
        .collect();
    let results: Vec<Result<RunOutput>> = with_pool(|| {
        jobs.par_iter()
            .map(|(b, k)| {
                let sc = &batches[*b].scenario;
                let opts = SimOptions {
                    record_candidates: batches[*b].key == "adversarial",
                    ..SimOptions::default()
                };
                run_with(sc, suite.seed + k, &opts)
            })
            .collect()
    });
    for ((b, _), r) in jobs.iter().zip(results) {
        batches[*b].runs.push(r?);
    }
    Ok(batches)
}

fn batch<'a>(batches: &'a [Batch], key: &str) -> &'a Batch {
    batches.iter().find(|b| b.key == key).expect("suite batch")
}

fn t_f_spread(b: &Batch) -> (Option<f64>, usize) {
    let t: Vec<f64> = b.runs.iter().filter_map(|r| r.summary.metrics.t_f).collect();
    let missing = b.runs.len() - t.len();
    let lo = t.iter().copied().reduce(f64::min);
    let hi = t.iter().copied().reduce(f64::max);
    (lo.zip(hi).map(|(a, b)| b - a), missing)
}

fn categories(b: &Batch) -> String {
    let mut names: Vec<&str> = b
        .runs
        .iter()
        .map(|r| r.summary.metrics.category.map_or("none", ManeuverCategory::as_str))
        .collect();
    names.sort();
    names.dedup();
    names.join("/")
}

pub fn timing(batches: &[Batch]) -> Vec<Check> {
    let mut out = Vec::new();
    let spread = |key: &str| t_f_spread(batch(batches, key));
    for key in ["no_traffic", "merge_before"] {
        let (s, missing) = spread(key);
        let b = batch(batches, key);
        let name = if key == "no_traffic" {
            "timing.no_traffic_spread"
        } else {
            "timing.merge_before_spread"
        };
        out.push(Check::new(
            name,
            missing == 0 && s.is_some_and(|s| s <= 0.15),
            format!(
                "{} seeds, t_f spread {} s (<= 0.15), {missing} without arrival, categories {}",
                b.runs.len(),
                s.map_or("-".into(), |s| format!("{s:.3}")),
                categories(b)
            ),
        ));
    }
    let (free, _) = spread("no_traffic");
    let (behind, missing) = spread("merge_behind");
    let b = batch(batches, "merge_behind");
    out.push(Check::new(
        "timing.merge_behind_ratio",
        missing == 0 && matches!((free, behind), (Some(f), Some(m)) if m >= 4.0 * f),
        format!(
            "{} seeds, t_f spread {} s vs no_traffic {} s (>= 4x), categories {}",
            b.runs.len(),
            behind.map_or("-".into(), |s| format!("{s:.3}")),
            free.map_or("-".into(), |s| format!("{s:.3}")),
            categories(b)
        ),
    ));
    let b = batch(batches, "stop_then_merge");
    let with = b.runs.iter().filter(|r| r.summary.metrics.standstill_at_stop).count();
    out.push(Check::new(
        "timing.stop_then_merge_standstill",
        with == b.runs.len() && !b.runs.is_empty(),
        format!(
            "{with}/{} runs hold a standstill segment at s_stop, categories {}",
            b.runs.len(),
            categories(b)
        ),
    ));
    out
}

pub fn lane_keeping(batches: &[Batch]) -> Check {
    let mut minima: Vec<(f64, String)> = Vec::new();
    let mut bad_frames = 0;
    let mut frames = 0;
    for b in batches {
        for r in &b.runs {
            frames += r.log.frames.len();
            bad_frames += r.log.frames.iter().filter(|f| !(f.d_lane > 0.0)).count();
            minima.push((r.summary.metrics.min_d_lane, format!("{}#{}", b.key, r.log.seed)));
        }
    }
    minima.sort_by(|a, b| a.0.total_cmp(&b.0));
    let d: Vec<f64> = minima.iter().map(|m| m.0).collect();
    let flagged: Vec<&str> = minima.iter().filter(|m| m.0 < 0.1).map(|m| m.1.as_str()).collect();
    let in_band = d.iter().filter(|x| (0.2..=0.4).contains(*x)).count();
    let pct = |q: f64| crate::report::percentile(&d, q);
    Check::new(
        "lane_keeping",
        bad_frames == 0 && !d.is_empty(),
        format!(
            "{} runs, {frames} frames, {bad_frames} with d_Lane <= 0; run minima min {:.3} / p10 {:.3} / median {:.3} / max {:.3} m, {in_band} in [0.2, 0.4]; below 0.1 m: {}",
            d.len(),
            pct(0.0),
            pct(10.0),
            pct(50.0),
            pct(100.0),
            if flagged.is_empty() { String::from("none") } else { flagged.join(", ") }
        ),
    )
}

pub fn comfort(batches: &[Batch]) -> Vec<Check> {
    let mut per: Vec<String> = Vec::new();
    let mut worst: f64 = 0.0;
    for b in batches.iter().filter(|b| b.key != "adversarial") {
        let planned = b.runs.iter().map(|r| r.summary.metrics.max_jerk_planned).fold(0.0, f64::max);
        let exec = b.runs.iter().map(|r| r.summary.metrics.max_jerk_smoothed).fold(0.0, f64::max);
        worst = worst.max(planned);
        per.push(format!("{} {planned:.2}/{exec:.2}", b.key));
    }
    let planned = Check::new(
        "comfort.planned_jerk",
        worst <= JERK_COMFORT,
        format!(
            "max planned |u| {worst:.3} m/s^3 (<= {JERK_COMFORT}); planned/executed per scenario: {}",
            per.join(", ")
        ),
    );

    let (d, t, dt) = (100.0, 10.0, 0.05);
    let seg = solve_min_jerk_segment(LongitudinalState::default(), LongitudinalState::new(d, 0.0, 0.0), t)
        .expect("positive duration");
    let n = (t / dt).round() as usize;
    let accel: Vec<f64> = (0..=n).map(|k| seg.state(k as f64 * dt).a).collect();
    let (_, logged) = jerk_stats(&accel, dt, 0.3);
    let closed = 60.0 * d / (t * t * t);
    let err = (logged - closed).abs() / closed;
    let quintic = Check::new(
        "comfort.quintic_extremum",
        err <= 0.05 && (seg.max_abs_jerk() - closed).abs() <= 1e-9 * closed,
        format!(
            "rest-to-rest {d} m in {t} s: 60D/T^3 = {closed:.4}, segment max {:.4}, logged max {logged:.4} ({:.2}% <= 5%)",
            seg.max_abs_jerk(),
            100.0 * err
        ),
    );
    vec![planned, quintic]
}

pub fn fail_safe(batches: &[Batch]) -> Vec<Check> {
    let adv = batch(batches, "adversarial");
    let sc = &adv.scenario;
    let s_stop = sc.spec.junction.s_stop;
    let a_min = sc.spec.rules.a_min;
    let p_max = sc.spec.rules.p_risk_max;
    let mut cycles = 0;
    let mut overrun = 0;
    let mut merges = 0;
    let mut min_merge_risk = f64::INFINITY;
    let mut max_s: f64 = f64::NEG_INFINITY;
    for r in &adv.runs {
        for c in &r.log.cycles {
            cycles += 1;
            let end = c.trajectory().end_state();
            if end.s > s_stop + 1e-6 || end.v > 1e-6 {
                overrun += 1;
            }
            if matches!(c.option, BehaviorKind::MergeDynamic | BehaviorKind::FollowThenMerge) {
                merges += 1;
            }
            for cand in &c.candidates {
                if matches!(cand.kind, BehaviorKind::MergeDynamic | BehaviorKind::FollowThenMerge) && cand.valid {
                    min_merge_risk = min_merge_risk.min(cand.p_risk);
                }
            }
        }
        max_s = r.log.frames.iter().map(|f| f.s).fold(max_s, f64::max);
    }
    let stops = Check::new(
        "fail_safe.stops_before_line",
        overrun == 0 && merges == 0 && cycles > 0,
        format!(
            "{} runs, {cycles} cycles: {overrun} plans not at rest by s_stop = {s_stop:.2}, {merges} merges selected, max ego s {max_s:.2}, lowest kinematically valid merge p_risk {} (p_risk_max {p_max})",
            adv.runs.len(),
            if min_merge_risk.is_finite() { format!("{min_merge_risk:.3e}") } else { String::from("-") }
        ),
    );

    let mut checked = 0;
    let mut committed = 0;
    let mut violations = 0;
    let mut worst: f64 = f64::NEG_INFINITY;
    for b in batches {
        for r in &b.runs {
            for c in r.log.cycles.iter().filter(|c| c.context_kind == ContextKind::Merge && c.x0.s <= s_stop) {
                let traj = c.trajectory();
                let t_end = c.t_pnr.unwrap_or(traj.duration()).min(traj.duration());
                if t_end <= 0.0 {
                    // already committed: no state lies before the PNR
                    committed += 1;
                    continue;
                }
                checked += 1;
                let n = (t_end / 0.005).ceil() as usize;
                let over = (0..=n)
                    .map(|k| traj.state_at((k as f64 * 0.005).min(t_end)))
                    .map(|x| x.s + x.v.max(0.0) * x.v.max(0.0) / (2.0 * a_min.abs()) - s_stop)
                    .fold(f64::NEG_INFINITY, f64::max);
                worst = worst.max(over);
                if over > 1e-6 {
                    violations += 1;
                }
            }
        }
    }
    let pnr = Check::new(
        "fail_safe.pnr_braking",
        violations == 0 && checked > 0,
        format!(
            "{checked} plans before the yield line ({committed} more already past their PNR): {violations} where a_min braking before the PNR overshoots s_stop, worst margin {worst:+.2e} m"
        ),
    );
    vec![stops, pnr]
}

/// Times a few sequential runs and keeps the cycles with many options.
pub fn performance(suite: &Suite, batches: &[Batch]) -> Result<Check> {
    let mut times: Vec<f64> = Vec::new();
    for key in ["adversarial", "merge_behind", "stop_then_merge"] {
        let sc = &batch(batches, key).scenario;
        for k in 0..suite.perf_runs as u64 {
            let out = run_once(sc, suite.seed + k)?;
            times.extend(
                out.log
                    .cycles
                    .iter()
                    .zip(&out.log.plan_times)
                    .filter(|(c, _)| c.n_options >= suite.perf_min_options)
                    .map(|(_, t)| t * 1e3),
            );
        }
    }
    times.sort_by(f64::total_cmp);
    let pct = |q: f64| crate::report::percentile(&times, q);
    let median = pct(50.0);
    Ok(Check::new(
        "performance",
        !times.is_empty() && median <= suite.perf_gate_ms,
        format!(
            "{} cycles with >= {} options: median {median:.3} ms ({} the {} ms figure, gate {} ms), p90 {:.3} ms, max {:.3} ms",
            times.len(),
            suite.perf_min_options,
            if median <= suite.perf_target_ms { "within" } else { "above" },
            suite.perf_target_ms,
            suite.perf_gate_ms,
            pct(90.0),
            pct(100.0)
        ),
    ))
}

pub fn tracking(suite: &Suite, batches: &[Batch]) -> Vec<Check> {
    let b = batch(batches, "s_curve");
    let sc = &b.scenario;
    let bound = A_PERP_MAX * (1.0 + A_PERP_TOL);
    let mut rollout: f64 = 0.0;
    let mut executed: f64 = 0.0;
    let mut v_bend: f64 = 0.0;
    let s_join = sc.spec.junction.s_pga - 8.0;
    for r in &b.runs {
        rollout = r.log.cycles.iter().map(|c| c.max_a_perp_rollout).fold(rollout, f64::max);
        executed = r.log.frames.iter().map(|f| f.a_perp.abs()).fold(executed, f64::max);
        v_bend = r.log.frames.iter().filter(|f| f.s < s_join).map(|f| f.v).fold(v_bend, f64::max);
    }
    let lateral = Check::new(
        "tracking.a_perp",
        rollout <= bound && executed <= bound && !b.runs.is_empty(),
        format!(
            "{} runs: max rollout a_perp {rollout:.4}, executed {executed:.4} m/s^2 (<= {bound:.4}), peak speed before the main road {v_bend:.3} m/s",
            b.runs.len()
        ),
    );

    let mut rng = ChaCha8Rng::seed_from_u64(suite.seed ^ 0x9ad);
    let mut worst: f64 = 0.0;
    let mut probes = 0;
    if let Some(run) = b.runs.first() {
        let steps = (1.0 / (sc.spec.plan_hz * sc.spec.physics_step)).round() as usize;
        let every = (run.log.cycles.len() / suite.gradient_problems.max(1)).max(1);
        for (i, c) in run.log.cycles.iter().enumerate().step_by(every).take(suite.gradient_problems) {
            let Some(f) = run.log.frames.get(i * steps) else { break };
            let state = VehicleState {
                x: f.x,
                y: f.y,
                phi: f.phi,
                v: f.v,
                a: f.a,
                delta: f.delta,
            };
            let problem = TrackingProblem::new(&c.trajectory(), &sc.ego_path, &state, &sc.spec.tracker, &sc.spec.vehicle);
            let u: Vec<[f64; 2]> = problem
                .feedforward()
                .iter()
                .map(|u| [u[0] + rng.random_range(-0.3..0.3), u[1] + rng.random_range(-0.05..0.05)])
                .collect();
            let (_, g) = problem.cost_and_gradient(&u);
            let norm = g.iter().flat_map(|x| x.iter()).fold(0.0f64, |m, x| m.max(x.abs()));
            for _ in 0..6 {
                let k = rng.random_range(0..u.len());
                let j = rng.random_range(0..2);
                let h = 1e-6;
                let mut up = u.clone();
                up[k][j] += h;
                let mut dn = u.clone();
                dn[k][j] -= h;
                let fd = (problem.cost(&up) - problem.cost(&dn)) / (2.0 * h);
                let scale = fd.abs().max(g[k][j].abs()).max(1e-3 * norm).max(1e-12);
                worst = worst.max((fd - g[k][j]).abs() / scale);
                probes += 1;
            }
        }
    }
    let gradient = Check::new(
        "tracking.gradient",
        probes > 0 && worst <= 1e-4,
        format!("{probes} coordinates on closed-loop problems: worst relative gap {worst:.2e} (<= 1e-4)"),
    );
    vec![lateral, gradient]
}

fn artifacts(out: &RunOutput) -> Result<[Vec<u8>; 3]> {
    let mut a = (Vec::new(), Vec::new(), Vec::new());
    write_trajectory_csv(&mut a.0, &out.log)?;
    write_candidates_json(&mut a.1, &out.log)?;
    write_metrics_json(&mut a.2, &out.summary)?;
    Ok([a.0, a.1, a.2])
}

/// Sequential and pooled reruns of one seed produce the same bytes.
pub fn determinism(suite: &Suite, batches: &[Batch]) -> Result<Check> {
    let sc = &batch(batches, "merge_behind").scenario;
    let seed = suite.seed;
    let first = artifacts(&run_once(sc, seed)?)?;
    let second = artifacts(&run_once(sc, seed)?)?;
    let pooled: Vec<RunOutput> = with_pool(|| {
        [seed, seed]
            .par_iter()
            .map(|s| run_once(sc, *s))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut same = first == second;
    for p in &pooled {
        same &= artifacts(p)? == first;
    }
    let bytes: usize = first.iter().map(Vec::len).sum();
    Ok(Check::new(
        "determinism",
        same,
        format!(
            "4 reruns of {} seed {seed}: trajectory CSV, candidates JSON and metrics JSON ({bytes} bytes) {}",
            sc.spec.name,
            if same { "byte-identical" } else { "differ" }
        ),
    ))
}

/// Runs every check in order.
pub fn run_suite(suite: &Suite, base: &Path) -> Result<Vec<Check>> {
    let mut checks = vec![
        ocp_oracle(suite),
        risk_monte_carlo(suite),
        risk_order_invariance(suite),
        risk_fuzz(suite),
    ];
    let batches = simulate_suite(suite, base)?;
    checks.push(formal_safety(suite, &batch(&batches, "adversarial").scenario));
    checks.extend(timing(&batches));
    checks.push(lane_keeping(&batches));
    checks.extend(comfort(&batches));
    checks.extend(fail_safe(&batches));
    checks.push(performance(suite, &batches)?);
    checks.extend(tracking(suite, &batches));
    checks.push(determinism(suite, &batches)?);
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qp_matches_closed_form_on_rest_to_rest() {
        let x0 = LongitudinalState::default();
        let xf = LongitudinalState::new(100.0, 0.0, 0.0);
        let u = qp_min_jerk(x0, xf, 10.0, 2000);
        // u(τ) = 60 D/T³ (1 − 6τ/T + 6τ²/T²) at the first step midpoint
        let tau = 0.5 * 10.0 / 2000.0;
        let expect = 6.0 * (1.0 - 6.0 * tau / 10.0 + 6.0 * tau * tau / 100.0);
        assert!((u[0] - expect).abs() < 1e-3, "{} vs {expect}", u[0]);
    }

    #[test]
    fn suite_defaults_round_trip() {
        let s = Suite::default();
        let text = serde_json::to_string(&s).unwrap();
        let back: Suite = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
    }
}
