//! Lateral tracking of a longitudinal plan with a receding-horizon
//! optimization over a kinematic single-track model.

use alloc::vec::Vec;
use core::ops::{Add, Div, Mul, Neg, Sub};

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, PathRef, Vec2};
use crate::planner::LongitudinalTrajectory;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub phi: f64,
    pub v: f64,
    pub a: f64,
    pub delta: f64,
}

impl VehicleState {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    fn to_array(self) -> [f64; 6] {
        [self.x, self.y, self.phi, self.v, self.a, self.delta]
    }

    fn from_array(a: [f64; 6]) -> Self {
        VehicleState {
            x: a[0],
            y: a[1],
            phi: a[2],
            v: a[3],
            a: a[4],
            delta: a[5],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleParams {
    pub l: f64,
    pub v_char: f64,
    pub width: f64,
    pub length: f64,
    /// Distance from the rear axle (the reference point) to the rear bumper.
    pub rear_overhang: f64,
    pub delta_max: f64,
    pub ddelta_max: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        VehicleParams {
            l: 2.7,
            v_char: 20.0,
            width: 1.8,
            length: 4.5,
            rear_overhang: 0.9,
            delta_max: 0.6,
            ddelta_max: 0.5,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.l > 0.0) {
            return Err(Error::invalid("l", "wheelbase must be positive"));
        }
        if !(self.v_char > 0.0) {
            return Err(Error::invalid("v_char", "characteristic velocity must be positive"));
        }
        if !(self.width > 0.0 && self.length > 0.0) {
            return Err(Error::invalid("width", "vehicle dimensions must be positive"));
        }
        if !(self.delta_max > 0.0 && self.ddelta_max > 0.0) {
            return Err(Error::invalid("delta_max", "steering bounds must be positive"));
        }
        Ok(())
    }

    /// Offset from the rear axle to the bounding-box center.
    pub fn center_offset(&self) -> f64 {
        0.5 * self.length - self.rear_overhang
    }

    fn understeer(&self, v: f64) -> f64 {
        1.0 + (v / self.v_char) * (v / self.v_char)
    }

    /// Steering angle for a steady turn of curvature `kappa` at speed `v`.
    pub fn steady_state_delta(&self, kappa: f64, v: f64) -> f64 {
        kappa * self.l * self.understeer(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    pub horizon: f64,
    pub step: f64,
    pub w_v: f64,
    pub w_a: f64,
    pub w_ddelta: f64,
    pub w_dperp: f64,
    pub w_phi: f64,
    pub a_perp_max: f64,
    /// Relative safety margin on `a_perp_max` used inside the solver.
    pub a_perp_margin: f64,
    pub penalty: f64,
    pub max_iterations: usize,
    pub violation_tol: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            horizon: 3.0,
            step: 0.05,
            w_v: 1.0,
            w_a: 0.2,
            w_ddelta: 10.0,
            w_dperp: 5.0,
            w_phi: 2.0,
            a_perp_max: 1.45,
            a_perp_margin: 0.005,
            penalty: 1e3,
            max_iterations: 60,
            violation_tol: 0.01,
        }
    }
}

impl TrackerConfig {
    pub fn points(&self) -> usize {
        (self.horizon / self.step).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.horizon > 0.0) {
            return Err(Error::invalid("horizon", "horizon and step must be positive"));
        }
        let n = self.horizon / self.step;
        if (n - n.round()).abs() > 1e-6 {
            return Err(Error::invalid("horizon", "horizon/step must be an integer"));
        }
        for (name, w) in [
            ("w_v", self.w_v),
            ("w_a", self.w_a),
            ("w_ddelta", self.w_ddelta),
            ("w_dperp", self.w_dperp),
            ("w_phi", self.w_phi),
        ] {
            if !(w >= 0.0) {
                return Err(Error::invalid(name, "weights must be non-negative"));
            }
        }
        if !(self.a_perp_max > 0.0) {
            return Err(Error::invalid("a_perp_max", "must be positive"));
        }
        Ok(())
    }
}

/// Scalar abstraction so the dynamics can run on plain and dual numbers.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Mul<f64, Output = Self>
{
    fn c(x: f64) -> Self;
    fn value(self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
}

impl Scalar for f64 {
    fn c(x: f64) -> Self {
        x
    }
    fn value(self) -> f64 {
        self
    }
    fn sin(self) -> Self {
        Float::sin(self)
    }
    fn cos(self) -> Self {
        Float::cos(self)
    }
}

/// Forward-mode dual number with `N` tangent directions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual<const N: usize> {
    pub v: f64,
    pub d: [f64; N],
}

impl<const N: usize> Dual<N> {
    pub fn var(v: f64, i: usize) -> Self {
        let mut d = [0.0; N];
        d[i] = 1.0;
        Dual { v, d }
    }
}

impl<const N: usize> Add for Dual<N> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let mut d = self.d;
        for (x, y) in d.iter_mut().zip(o.d) {
            *x += y;
        }
        Dual { v: self.v + o.v, d }
    }
}

impl<const N: usize> Sub for Dual<N> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        let mut d = self.d;
        for (x, y) in d.iter_mut().zip(o.d) {
            *x -= y;
        }
        Dual { v: self.v - o.v, d }
    }
}

impl<const N: usize> Mul for Dual<N> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let mut d = [0.0; N];
        for i in 0..N {
            d[i] = self.d[i] * o.v + self.v * o.d[i];
        }
        Dual { v: self.v * o.v, d }
    }
}

impl<const N: usize> Div for Dual<N> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let inv = 1.0 / o.v;
        let mut d = [0.0; N];
        for i in 0..N {
            d[i] = (self.d[i] * o.v - self.v * o.d[i]) * inv * inv;
        }
        Dual { v: self.v * inv, d }
    }
}

impl<const N: usize> Neg for Dual<N> {
    type Output = Self;
    fn neg(self) -> Self {
        Dual {
            v: -self.v,
            d: self.d.map(|x| -x),
        }
    }
}

impl<const N: usize> Mul<f64> for Dual<N> {
    type Output = Self;
    fn mul(self, k: f64) -> Self {
        Dual {
            v: self.v * k,
            d: self.d.map(|x| x * k),
        }
    }
}

impl<const N: usize> Scalar for Dual<N> {
    fn c(x: f64) -> Self {
        Dual { v: x, d: [0.0; N] }
    }
    fn value(self) -> f64 {
        self.v
    }
    fn sin(self) -> Self {
        let (s, c) = (Float::sin(self.v), Float::cos(self.v));
        Dual {
            v: s,
            d: self.d.map(|x| x * c),
        }
    }
    fn cos(self) -> Self {
        let (s, c) = (Float::sin(self.v), Float::cos(self.v));
        Dual {
            v: c,
            d: self.d.map(|x| -x * s),
        }
    }
}

fn rhs<S: Scalar>(x: &[S; 6], u: S, ddelta: S, p: &VehicleParams) -> [S; 6] {
    let v = x[3];
    let ratio = v * (1.0 / p.v_char);
    let yaw = v * x[5] / ((S::c(1.0) + ratio * ratio) * p.l);
    [v * x[2].cos(), v * x[2].sin(), yaw, x[4], u, ddelta]
}

fn axpy<S: Scalar>(x: &[S; 6], k: &[S; 6], h: f64) -> [S; 6] {
    core::array::from_fn(|i| x[i] + k[i] * h)
}

fn clamp_scalar<S: Scalar>(x: S, m: f64) -> S {
    if x.value() > m {
        S::c(m)
    } else if x.value() < -m {
        S::c(-m)
    } else {
        x
    }
}

fn rk4<S: Scalar>(x: [S; 6], u: S, ddelta: S, dt: f64, p: &VehicleParams) -> [S; 6] {
    let k1 = rhs(&x, u, ddelta, p);
    let k2 = rhs(&axpy(&x, &k1, 0.5 * dt), u, ddelta, p);
    let k3 = rhs(&axpy(&x, &k2, 0.5 * dt), u, ddelta, p);
    let k4 = rhs(&axpy(&x, &k3, dt), u, ddelta, p);
    let mut out: [S; 6] = core::array::from_fn(|i| {
        x[i] + (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (dt / 6.0)
    });
    out[5] = clamp_scalar(out[5], p.delta_max);
    out
}

/// One fixed-step RK4 step with controls `(jerk, steering rate)`.
pub fn bicycle_step(state: &VehicleState, controls: (f64, f64), dt: f64, params: &VehicleParams) -> VehicleState {
    let x = rk4(state.to_array(), controls.0, controls.1, dt, params);
    VehicleState::from_array(x)
}

/// `δ v² / (l (1 + (v/v_char)²))`.
pub fn lateral_accel(state: &VehicleState, params: &VehicleParams) -> f64 {
    state.delta * state.v * state.v / (params.l * params.understeer(state.v))
}

/// Reference values at the end of each shooting interval.
#[derive(Debug, Clone, Copy, PartialEq)]
struct RefPoint {
    v: f64,
    a: f64,
    pos: Vec2,
    heading: f64,
}

/// The discretized tracking problem for one cycle.
#[derive(Debug, Clone)]
pub struct TrackingProblem {
    x0: VehicleState,
    refs: Vec<RefPoint>,
    cfg: TrackerConfig,
    params: VehicleParams,
    a_lim: f64,
    feedforward: Vec<[f64; 2]>,
}

fn stage_cost<S: Scalar>(x: &[S; 6], ddelta: S, r: &RefPoint, cfg: &TrackerConfig, params: &VehicleParams, a_lim: f64) -> S {
    let ev = x[3] - S::c(r.v);
    let ea = x[4] - S::c(r.a);
    let (sh, ch) = (Float::sin(r.heading), Float::cos(r.heading));
    let d_perp = (x[1] - S::c(r.pos.y)) * ch - (x[0] - S::c(r.pos.x)) * sh;
    let ephi = x[2] - S::c(r.heading);
    let mut j = ev * ev * cfg.w_v
        + ea * ea * cfg.w_a
        + ddelta * ddelta * cfg.w_ddelta
        + d_perp * d_perp * cfg.w_dperp
        + ephi * ephi * cfg.w_phi;
    let ratio = x[3] * (1.0 / params.v_char);
    let a_perp = x[5] * x[3] * x[3] / ((S::c(1.0) + ratio * ratio) * params.l);
    let excess = if a_perp.value() > a_lim {
        a_perp - S::c(a_lim)
    } else if a_perp.value() < -a_lim {
        -a_perp - S::c(a_lim)
    } else {
        S::c(0.0)
    };
    j = j + excess * excess * cfg.penalty;
    j
}

impl TrackingProblem {
    pub fn new(
        plan: &LongitudinalTrajectory,
        path: &PathRef,
        state: &VehicleState,
        cfg: &TrackerConfig,
        params: &VehicleParams,
    ) -> Self {
        let n = cfg.points();
        let dt = cfg.step;
        let s_start = plan.state_at(0.0).s;
        // keep the vehicle heading within π of the path tangent
        let h0 = path.sample_at(s_start).heading;
        let mut x0 = *state;
        x0.phi = h0 + wrap_angle(state.phi - h0);
        let refs: Vec<RefPoint> = (1..=n)
            .map(|k| {
                let t = k as f64 * dt;
                let lon = plan.state_at(t);
                let p = path.sample_at(lon.s);
                RefPoint {
                    v: lon.v,
                    a: lon.a,
                    pos: p.position(),
                    heading: p.heading,
                }
            })
            .collect();
        let mut feedforward = Vec::with_capacity(n);
        let mut delta = x0.delta;
        for k in 0..n {
            let t_mid = (k as f64 + 0.5) * dt;
            let u = plan.jerk_at(t_mid);
            let lon = plan.state_at((k + 1) as f64 * dt);
            let target = params
                .steady_state_delta(path.kappa_at(lon.s), lon.v)
                .clamp(-params.delta_max, params.delta_max);
            let dd = ((target - delta) / dt).clamp(-params.ddelta_max, params.ddelta_max);
            delta += dd * dt;
            feedforward.push([u, dd]);
        }
        TrackingProblem {
            x0,
            refs,
            cfg: cfg.clone(),
            params: *params,
            a_lim: cfg.a_perp_max * (1.0 - cfg.a_perp_margin),
            feedforward,
        }
    }

    pub fn len(&self) -> usize {
        self.refs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.refs.is_empty()
    }

    pub fn initial_state(&self) -> VehicleState {
        self.x0
    }

    pub fn feedforward(&self) -> &[[f64; 2]] {
        &self.feedforward
    }

    pub fn rollout(&self, controls: &[[f64; 2]]) -> Vec<VehicleState> {
        let mut out = Vec::with_capacity(controls.len() + 1);
        let mut x = self.x0.to_array();
        out.push(self.x0);
        for c in controls {
            x = rk4(x, c[0], c[1], self.cfg.step, &self.params);
            out.push(VehicleState::from_array(x));
        }
        out
    }

    pub fn cost(&self, controls: &[[f64; 2]]) -> f64 {
        let mut x = self.x0.to_array();
        let mut j = 0.0;
        for (c, r) in controls.iter().zip(&self.refs) {
            x = rk4(x, c[0], c[1], self.cfg.step, &self.params);
            j += stage_cost(&x, c[1], r, &self.cfg, &self.params, self.a_lim);
        }
        j
    }

    /// Cost and its gradient with respect to every control, by the adjoint
    /// recursion over forward-mode step Jacobians.
    pub fn cost_and_gradient(&self, controls: &[[f64; 2]]) -> (f64, Vec<[f64; 2]>) {
        let n = controls.len().min(self.refs.len());
        let dt = self.cfg.step;
        // forward pass storing Jacobians of each step
        let mut jx: Vec<[[f64; 6]; 6]> = Vec::with_capacity(n);
        let mut ju: Vec<[[f64; 2]; 6]> = Vec::with_capacity(n);
        let mut lx: Vec<[f64; 6]> = Vec::with_capacity(n);
        let mut lu: Vec<f64> = Vec::with_capacity(n);
        let mut x = self.x0.to_array();
        let mut total = 0.0;
        for k in 0..n {
            let xd: [Dual<8>; 6] = core::array::from_fn(|i| Dual::var(x[i], i));
            let ud = Dual::var(controls[k][0], 6);
            let dd = Dual::var(controls[k][1], 7);
            let next = rk4(xd, ud, dd, dt, &self.params);
            let mut a = [[0.0; 6]; 6];
            let mut b = [[0.0; 2]; 6];
            for i in 0..6 {
                for j in 0..6 {
                    a[i][j] = next[i].d[j];
                }
                b[i] = [next[i].d[6], next[i].d[7]];
            }
            let xn: [f64; 6] = core::array::from_fn(|i| next[i].v);
            let xs: [Dual<7>; 6] = core::array::from_fn(|i| Dual::var(xn[i], i));
            let l = stage_cost(&xs, Dual::var(controls[k][1], 6), &self.refs[k], &self.cfg, &self.params, self.a_lim);
            total += l.v;
            lx.push(core::array::from_fn(|i| l.d[i]));
            lu.push(l.d[6]);
            jx.push(a);
            ju.push(b);
            x = xn;
        }
        // backward pass
        let mut grad = alloc::vec![[0.0; 2]; controls.len()];
        let mut lambda = [0.0; 6];
        for k in (0..n).rev() {
            for i in 0..6 {
                lambda[i] += lx[k][i];
            }
            let b = &ju[k];
            let mut g = [0.0, lu[k]];
            for i in 0..6 {
                g[0] += b[i][0] * lambda[i];
                g[1] += b[i][1] * lambda[i];
            }
            grad[k] = g;
            let a = &jx[k];
            let mut prev = [0.0; 6];
            for j in 0..6 {
                for i in 0..6 {
                    prev[j] += a[i][j] * lambda[i];
                }
            }
            lambda = prev;
        }
        (total, grad)
    }

    /// Largest excess of `|a⊥|` over the configured bound along a rollout.
    pub fn violation(&self, states: &[VehicleState]) -> f64 {
        states
            .iter()
            .map(|s| (lateral_accel(s, &self.params).abs() - self.cfg.a_perp_max).max(0.0))
            .fold(0.0, f64::max)
    }

    fn project(&self, controls: &mut [[f64; 2]]) {
        let m = self.params.ddelta_max;
        for c in controls.iter_mut() {
            c[1] = c[1].clamp(-m, m);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackResult {
    pub states: Vec<VehicleState>,
    pub controls: Vec<[f64; 2]>,
    pub cost: f64,
    pub iterations: usize,
    pub violation: f64,
}

/// Projected gradient descent with Barzilai–Borwein trial steps and an
/// Armijo backtracking line search.
pub fn solve(problem: &TrackingProblem, warm: Option<&[[f64; 2]]>) -> Result<TrackResult> {
    let n = problem.len();
    let mut u: Vec<[f64; 2]> = match warm {
        Some(w) if w.len() == n => w.to_vec(),
        _ => problem.feedforward().to_vec(),
    };
    problem.project(&mut u);
    let (mut j, mut g) = problem.cost_and_gradient(&u);
    let mut step = 1e-3;
    let mut prev: Option<(Vec<[f64; 2]>, Vec<[f64; 2]>)> = None;
    let mut iterations = 0;
    let mut stalled = false;
    for it in 0..problem.cfg.max_iterations {
        iterations = it + 1;
        if let Some((pu, pg)) = &prev {
            let mut sy = 0.0;
            let mut ss = 0.0;
            for k in 0..n {
                for i in 0..2 {
                    let s = u[k][i] - pu[k][i];
                    let y = g[k][i] - pg[k][i];
                    sy += s * y;
                    ss += s * s;
                }
            }
            if sy > 1e-16 {
                step = (ss / sy).clamp(1e-6, 10.0);
            }
        }
        let mut accepted = false;
        let mut trial_step = step;
        for _ in 0..30 {
            let mut cand: Vec<[f64; 2]> = u
                .iter()
                .zip(&g)
                .map(|(c, d)| [c[0] - trial_step * d[0], c[1] - trial_step * d[1]])
                .collect();
            problem.project(&mut cand);
            let mut decrease = 0.0;
            for k in 0..n {
                for i in 0..2 {
                    decrease += g[k][i] * (u[k][i] - cand[k][i]);
                }
            }
            let jc = problem.cost(&cand);
            if jc <= j - 1e-4 * decrease && decrease > 0.0 {
                let (jn, gn) = problem.cost_and_gradient(&cand);
                let improvement = j - jn;
                prev = Some((core::mem::replace(&mut u, cand), core::mem::replace(&mut g, gn)));
                j = jn;
                accepted = true;
                if improvement < 1e-10 {
                    stalled = true;
                }
                break;
            }
            trial_step *= 0.5;
        }
        if !accepted || stalled {
            stalled = true;
            break;
        }
        let gnorm: f64 = g.iter().map(|c| c[0] * c[0] + c[1] * c[1]).sum::<f64>().sqrt();
        if gnorm < 1e-8 {
            break;
        }
    }
    let states = problem.rollout(&u);
    let violation = problem.violation(&states);
    let tol = problem.cfg.violation_tol * problem.cfg.a_perp_max;
    if stalled && violation > tol {
        return Err(Error::SolverStall { iterations, violation });
    }
    Ok(TrackResult {
        states,
        controls: u,
        cost: j,
        iterations,
        violation,
    })
}

/// Builds and solves the tracking problem from the feedforward guess.
pub fn track(
    plan: &LongitudinalTrajectory,
    path: &PathRef,
    state: &VehicleState,
    cfg: &TrackerConfig,
    params: &VehicleParams,
) -> Result<TrackResult> {
    let problem = TrackingProblem::new(plan, path, state, cfg, params);
    solve(&problem, None)
}

/// Tracker keeping the previous solution for warm starts and fallback.
#[derive(Debug, Clone)]
pub struct LateralTracker {
    pub cfg: TrackerConfig,
    pub params: VehicleParams,
    last: Option<Vec<[f64; 2]>>,
    pub stalls: usize,
}

impl LateralTracker {
    pub fn new(cfg: TrackerConfig, params: VehicleParams) -> Self {
        LateralTracker {
            cfg,
            params,
            last: None,
            stalls: 0,
        }
    }

    /// Solves for the current cycle; on a stall the previous controls,
    /// shifted by `elapsed_steps`, are returned instead.
    pub fn step(
        &mut self,
        plan: &LongitudinalTrajectory,
        path: &PathRef,
        state: &VehicleState,
        elapsed_steps: usize,
    ) -> Vec<[f64; 2]> {
        let problem = TrackingProblem::new(plan, path, state, &self.cfg, &self.params);
        let n = problem.len();
        let shifted = self.last.as_ref().map(|prev| {
            let mut s: Vec<[f64; 2]> = prev.iter().skip(elapsed_steps).copied().collect();
            s.resize(n, [0.0, 0.0]);
            s
        });
        // warm start from the feedforward guess; the shifted solution is the fallback
        match solve(&problem, None) {
            Ok(r) => {
                self.last = Some(r.controls.clone());
                r.controls
            }
            Err(_) => {
                self.stalls += 1;
                let fallback = shifted.unwrap_or_else(|| problem.feedforward().to_vec());
                self.last = Some(fallback.clone());
                fallback
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_path, PathBuilder};
    use crate::planner::{LongitudinalState, TrajectorySegment};
    use proptest::prelude::*;

    fn params() -> VehicleParams {
        VehicleParams::default()
    }

    fn cruise_plan(v: f64, dt: f64) -> LongitudinalTrajectory {
        let seg = TrajectorySegment::min_jerk(
            LongitudinalState::new(0.0, v, 0.0),
            LongitudinalState::new(v * dt, v, 0.0),
            dt,
        )
        .unwrap();
        LongitudinalTrajectory::from_segments(alloc::vec![seg])
    }

    #[test]
    fn bicycle_examples() {
        let s = VehicleState { v: 5.0, ..Default::default() };
        let n = bicycle_step(&s, (0.0, 0.0), 1.0, &params());
        assert!((n.x - 5.0).abs() < 1e-12 && n.y.abs() < 1e-12 && n.phi == 0.0);

        let turning = VehicleState { v: 5.0, delta: 0.1, ..Default::default() };
        let yaw = rhs(&turning.to_array(), 0.0, 0.0, &params())[2];
        assert!((yaw - 5.0 * 0.1 / (2.7 * 1.0625)).abs() < 1e-12);
        assert!((yaw - 0.17429).abs() < 1e-5);

        let still = VehicleState { delta: 0.4, ..Default::default() };
        let n = bicycle_step(&still, (0.0, 0.0), 1.0, &params());
        assert_eq!((n.x, n.y, n.phi), (0.0, 0.0, 0.0));
    }

    #[test]
    fn lateral_accel_examples() {
        let p = params();
        assert_eq!(lateral_accel(&VehicleState { v: 5.0, ..Default::default() }, &p), 0.0);
        let a = lateral_accel(&VehicleState { v: 5.0, delta: 0.1, ..Default::default() }, &p);
        assert!((a - 0.8715).abs() < 1e-4);
        let b = lateral_accel(&VehicleState { v: 10.0, delta: 0.1, ..Default::default() }, &p);
        assert!((b - 2.963).abs() < 1e-3);
    }

    fn straight_path() -> PathRef {
        build_path(&[Vec2::new(0.0, 0.0), Vec2::new(50.0, 0.0), Vec2::new(100.0, 0.0)], 0.5).unwrap()
    }

    #[test]
    fn fixed_point_on_straight() {
        let plan = cruise_plan(6.0, 5.0);
        let path = straight_path();
        let state = VehicleState { v: 6.0, ..Default::default() };
        let r = track(&plan, &path, &state, &TrackerConfig::default(), &params()).unwrap();
        assert!(r.controls[0][0].abs() <= 1e-3 && r.controls[0][1].abs() <= 1e-3);
        assert!(r.states.iter().all(|s| s.y.abs() <= 1e-3));
        assert!(r.cost < 1e-8);
    }

    #[test]
    fn lateral_offset_decays() {
        let plan = cruise_plan(6.0, 10.0);
        let path = straight_path();
        let mut state = VehicleState { v: 6.0, y: 0.5, ..Default::default() };
        let mut tracker = LateralTracker::new(TrackerConfig::default(), params());
        let mut trace = alloc::vec![state.y];
        let mut t = 0.0;
        for _ in 0..40 {
            let seg_plan = {
                let x = plan.state_at(t);
                let seg = TrajectorySegment::min_jerk(x, LongitudinalState::new(x.s + 6.0 * 5.0, 6.0, 0.0), 5.0).unwrap();
                LongitudinalTrajectory::from_segments(alloc::vec![seg])
            };
            let controls = tracker.step(&seg_plan, &path, &state, 2);
            for c in controls.iter().take(2) {
                state = bicycle_step(&state, (c[0], c[1]), 0.05, &params());
                t += 0.05;
                trace.push(state.y);
            }
        }
        assert!(trace.last().unwrap().abs() < 0.05, "{trace:?}");
        assert!(trace.iter().all(|y| *y > -0.1), "overshoot {trace:?}");
        assert!(trace.windows(2).all(|w| w[1] <= w[0] + 1e-3 || w[1] < 0.02), "{trace:?}");
    }

    fn s_curve() -> PathRef {
        let k = 0.08;
        PathBuilder::new(Vec2::new(0.0, 0.0), 0.0, 0.1)
            .straight(15.0)
            .clothoid(3.0, k)
            .arc(8.0, k)
            .clothoid(6.0, -k)
            .arc(8.0, -k)
            .clothoid(3.0, 0.0)
            .straight(30.0)
            .build(0.1)
            .unwrap()
    }

    #[test]
    fn s_curve_respects_lateral_limit() {
        let path = s_curve();
        let v = (1.45f64 / 0.08).sqrt();
        let plan = cruise_plan(v, 20.0);
        let mut state = VehicleState { v, ..Default::default() };
        let mut tracker = LateralTracker::new(TrackerConfig::default(), params());
        let mut t = 0.0;
        let mut max_a = 0.0f64;
        let mut max_d = 0.0f64;
        while t < 14.0 {
            let x = plan.state_at(t);
            let seg = TrajectorySegment::min_jerk(x, LongitudinalState::new(x.s + v * 5.0, v, 0.0), 5.0).unwrap();
            let local = LongitudinalTrajectory::from_segments(alloc::vec![seg]);
            let problem = TrackingProblem::new(&local, &path, &state, &tracker.cfg, &tracker.params);
            let controls = tracker.step(&local, &path, &state, 2);
            for s in problem.rollout(&controls) {
                max_a = max_a.max(lateral_accel(&s, &params()).abs());
            }
            for c in controls.iter().take(2) {
                state = bicycle_step(&state, (c[0], c[1]), 0.05, &params());
                t += 0.05;
            }
            let f = path.project(state.position()).unwrap();
            max_d = max_d.max(f.d.abs());
        }
        assert!(max_a <= 1.45 * 1.01, "max a_perp {max_a}");
        assert!(max_d <= 0.3, "max d_perp {max_d}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn adjoint_gradient_matches_finite_differences(seed in proptest::collection::vec(-1.0f64..1.0, 120), y0 in -0.5f64..0.5) {
            let path = s_curve();
            let plan = cruise_plan(4.0, 10.0);
            let state = VehicleState { v: 4.0, y: y0, ..Default::default() };
            let problem = TrackingProblem::new(&plan, &path, &state, &TrackerConfig::default(), &params());
            let u: Vec<[f64; 2]> = seed.chunks(2).map(|c| [c[0], 0.3 * c[1]]).collect();
            let (_, g) = problem.cost_and_gradient(&u);
            for &k in &[0usize, 17, 42, 59] {
                for i in 0..2 {
                    let h = 1e-6;
                    let mut up = u.clone();
                    up[k][i] += h;
                    let mut dn = u.clone();
                    dn[k][i] -= h;
                    let fd = (problem.cost(&up) - problem.cost(&dn)) / (2.0 * h);
                    let scale = fd.abs().max(g[k][i].abs()).max(1e-2);
                    prop_assert!((fd - g[k][i]).abs() / scale <= 1e-4, "k {} i {} fd {} ad {}", k, i, fd, g[k][i]);
                }
            }
        }
    }
}
