//! Hybrid set-based / probabilistic residual risk.
//!
//! A candidate whose safety-critical passageway (PNR to PGA) is empty is
//! formally safe; otherwise each relevant object contributes the largest
//! probability of violating the safety distances over the passageway, the
//! per-object terms are combined as independent failures, and unreliable
//! perception adds its own mass on top.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::planner::LongitudinalTrajectory;
use crate::special::{normal_cdf, regularized_incomplete_beta};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ObjectId(pub u32);

/// Identifier used for synthetic end-of-sight objects.
pub const VIRTUAL_EOS_ID: ObjectId = ObjectId(u32::MAX);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LaneId(pub u16);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Ego,
    External,
    Virtual,
}

/// Beta-distributed belief that the perception source is correct.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityEstimate {
    pub beta_a: f64,
    pub beta_b: f64,
    pub alpha: f64,
}

impl ReliabilityEstimate {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta_a.is_finite() && self.beta_a > 0.0) {
            return Err(Error::invalid("beta_a", "must be finite and positive"));
        }
        if !(self.beta_b.is_finite() && self.beta_b > 0.0) {
            return Err(Error::invalid("beta_b", "must be finite and positive"));
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::invalid("alpha", "must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Probability mass of the reliability belief above the confidence level.
pub fn reliability(est: &ReliabilityEstimate) -> f64 {
    if est.alpha <= 0.0 {
        return 1.0;
    }
    (1.0 - regularized_incomplete_beta(est.beta_a, est.beta_b, est.alpha)).clamp(0.0, 1.0)
}

/// Constant-velocity Gaussian prediction in the common lane coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectPrediction {
    pub id: ObjectId,
    pub lane: LaneId,
    /// Position at t = 0 of the planning cycle.
    pub s0: f64,
    pub v: f64,
    pub sigma0: f64,
    pub sigma_rate: f64,
    pub horizon: f64,
    pub source: Source,
}

impl ObjectPrediction {
    pub fn mu(&self, t: f64) -> f64 {
        self.s0 + self.v * t
    }

    pub fn sigma(&self, t: f64) -> f64 {
        self.sigma0 + self.sigma_rate * t
    }

    pub fn v_pred(&self, _t: f64) -> f64 {
        self.v
    }
}

/// Safety-margin and virtual-object parameters of the risk model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RiskConfig {
    pub s_minus_0: f64,
    pub s_plus_0: f64,
    pub headway: f64,
    pub time_step: f64,
    /// End of sight, in the common lane coordinate.
    pub eos_position: f64,
    pub eos_speed: f64,
    pub eos_lane: LaneId,
    /// Conflict point in the common lane coordinate; real objects between
    /// the end of sight and this point suppress the virtual object.
    pub eos_conflict: f64,
    pub eos_sigma0: f64,
    pub eos_sigma_rate: f64,
    pub eos_horizon: f64,
    pub eos_enabled: bool,
}

impl Default for RiskConfig {
    fn default() -> Self {
        RiskConfig {
            s_minus_0: 2.0,
            s_plus_0: 2.0,
            headway: 1.0,
            time_step: 0.1,
            eos_position: 0.0,
            eos_speed: 8.33,
            eos_lane: LaneId(1),
            eos_conflict: 85.0,
            eos_sigma0: 0.5,
            eos_sigma_rate: 0.3,
            eos_horizon: 10.0,
            eos_enabled: true,
        }
    }
}

impl RiskConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.s_minus_0 >= 0.0) {
            return Err(Error::invalid("s_minus_0", "must be non-negative"));
        }
        if !(self.s_plus_0 >= 0.0) {
            return Err(Error::invalid("s_plus_0", "must be non-negative"));
        }
        if !(self.headway >= 0.0) {
            return Err(Error::invalid("headway", "must be non-negative"));
        }
        if !(self.time_step > 0.0) {
            return Err(Error::invalid("time_step", "must be positive"));
        }
        if !(self.eos_sigma0 > 0.0) || self.eos_sigma_rate < 0.0 {
            return Err(Error::invalid("eos_sigma0", "virtual sigma must stay positive"));
        }
        Ok(())
    }

    /// Margin behind the ego vehicle for an object at speed `v_obj`.
    pub fn s_minus(&self, v_ego: f64, v_obj: f64) -> f64 {
        self.s_minus_0 + self.headway * (v_obj - v_ego).max(0.0)
    }

    /// Margin ahead of the ego vehicle for an object at speed `v_obj`.
    pub fn s_plus(&self, v_ego: f64, v_obj: f64) -> f64 {
        self.s_plus_0 + self.headway * (v_ego - v_obj).max(0.0)
    }
}

/// Probability mass of a Gaussian `(mu, sigma)` inside `[lo, hi]`.
pub fn interval_mass(lo: f64, hi: f64, mu: f64, sigma: f64) -> f64 {
    (normal_cdf((hi - mu) / sigma) - normal_cdf((lo - mu) / sigma)).clamp(0.0, 1.0)
}

/// Probability that `obj` violates the safety distances of `traj` at time `t`.
pub fn object_interval_risk(
    traj: &LongitudinalTrajectory,
    obj: &ObjectPrediction,
    cfg: &RiskConfig,
    t: f64,
) -> f64 {
    let ego = traj.state_at(t);
    let v_obj = obj.v_pred(t);
    let lo = ego.s - cfg.s_minus(ego.v, v_obj);
    let hi = ego.s + cfg.s_plus(ego.v, v_obj);
    interval_mass(lo, hi, obj.mu(t), obj.sigma(t))
}

/// Per-object maximum over the passageway, scanned at `cfg.time_step`.
pub fn passageway_max(
    traj: &LongitudinalTrajectory,
    obj: &ObjectPrediction,
    cfg: &RiskConfig,
    t_pnr: f64,
    t_pga: f64,
) -> f64 {
    let end = t_pga.min(obj.horizon);
    if end < t_pnr {
        return 0.0;
    }
    let n = ((end - t_pnr) / cfg.time_step).ceil() as usize;
    let mut worst: f64 = 0.0;
    for k in 0..=n {
        let t = (t_pnr + k as f64 * cfg.time_step).min(end);
        worst = worst.max(object_interval_risk(traj, obj, cfg, t));
    }
    worst
}

/// Combines per-object probabilities as `p_{i+1} = p_i + (1 - p_i) p̃_{i+1}`.
///
/// The terms are folded in a canonical (descending) order so the result is
/// bit-identical for any permutation of the input.
pub fn combine_object_risks(per_object: &[f64]) -> f64 {
    let mut sorted: Vec<f64> = per_object.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut iter = sorted.into_iter();
    let Some(first) = iter.next() else {
        return 0.0;
    };
    iter.fold(first, |p, q| p + (1.0 - p) * q)
}

/// Residual risk of a candidate trajectory.
pub fn aggregate_risk(
    traj: &LongitudinalTrajectory,
    objects: &[ObjectPrediction],
    cfg: &RiskConfig,
    p_rel: f64,
) -> Result<f64> {
    let (Some(t_pnr), Some(t_pga)) = (traj.t_pnr, traj.t_pga) else {
        return Err(Error::MissingAnnotation);
    };
    let p_rel = p_rel.clamp(0.0, 1.0);
    let integral = if t_pga <= t_pnr {
        // fully inside a safe-set subset: the passageway is empty
        if p_rel >= 1.0 {
            return Ok(0.0);
        }
        0.0
    } else {
        let per: Vec<f64> = objects
            .iter()
            .map(|o| passageway_max(traj, o, cfg, t_pnr, t_pga))
            .collect();
        combine_object_risks(&per)
    };
    Ok(((1.0 - p_rel) + p_rel * integral).clamp(0.0, 1.0))
}

/// Virtual vehicle at the end of sight, approaching at `cfg.eos_speed`.
///
/// Returned only when no real object on the end-of-sight lane already lies
/// between the end of sight and the conflict point.
pub fn make_virtual_eos_object(
    cfg: &RiskConfig,
    objects: &[ObjectPrediction],
) -> Option<ObjectPrediction> {
    if !cfg.eos_enabled {
        return None;
    }
    let occupied = objects.iter().any(|o| {
        o.source != Source::Virtual
            && o.lane == cfg.eos_lane
            && o.s0 >= cfg.eos_position
            && o.s0 <= cfg.eos_conflict
    });
    if occupied {
        return None;
    }
    Some(ObjectPrediction {
        id: VIRTUAL_EOS_ID,
        lane: cfg.eos_lane,
        s0: cfg.eos_position,
        v: cfg.eos_speed,
        sigma0: cfg.eos_sigma0,
        sigma_rate: cfg.eos_sigma_rate,
        horizon: cfg.eos_horizon,
        source: Source::Virtual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::{LongitudinalState, LongitudinalTrajectory, TrajectorySegment};

    fn cruise(s0: f64, v: f64, dt: f64) -> LongitudinalTrajectory {
        let seg = TrajectorySegment::min_jerk(
            LongitudinalState::new(s0, v, 0.0),
            LongitudinalState::new(s0 + v * dt, v, 0.0),
            dt,
        )
        .unwrap();
        LongitudinalTrajectory::from_segments(alloc::vec![seg])
    }

    fn obj(s0: f64, v: f64, sigma: f64) -> ObjectPrediction {
        ObjectPrediction {
            id: ObjectId(1),
            lane: LaneId(1),
            s0,
            v,
            sigma0: sigma,
            sigma_rate: 0.0,
            horizon: 10.0,
            source: Source::External,
        }
    }

    #[test]
    fn reliability_examples() {
        let uni = ReliabilityEstimate { beta_a: 1.0, beta_b: 1.0, alpha: 0.9 };
        assert!((reliability(&uni) - 0.1).abs() < 1e-12);
        let full = ReliabilityEstimate { beta_a: 3.0, beta_b: 7.0, alpha: 0.0 };
        assert_eq!(reliability(&full), 1.0);
        let b82 = ReliabilityEstimate { beta_a: 8.0, beta_b: 2.0, alpha: 0.5 };
        assert!((reliability(&b82) - 0.980_468_75).abs() < 1e-9);
    }

    #[test]
    fn interval_risk_examples() {
        let traj = cruise(10.0, 0.0, 5.0);
        let sigma = 1.5;
        let cfg = RiskConfig {
            s_minus_0: 2.0 * sigma,
            s_plus_0: 2.0 * sigma,
            headway: 0.0,
            ..RiskConfig::default()
        };
        let p = object_interval_risk(&traj, &obj(10.0, 0.0, sigma), &cfg, 1.0);
        assert!((p - 0.954_499_736_103_642).abs() < 1e-12);
        let far = object_interval_risk(&traj, &obj(10.0 + 100.0 * sigma, 0.0, sigma), &cfg, 1.0);
        assert!(far < 1e-12);
        let wide = RiskConfig { s_minus_0: 200.0, s_plus_0: 20.0, headway: 0.0, ..cfg };
        let half = object_interval_risk(&traj, &obj(30.0, 0.0, 0.1), &wide, 1.0);
        assert!((half - 0.5).abs() < 1e-9);
    }

    #[test]
    fn aggregation_examples() {
        assert!((combine_object_risks(&[0.1, 0.2]) - 0.28).abs() < 1e-15);
        let mut traj = cruise(0.0, 5.0, 4.0);
        traj.t_pnr = Some(2.0);
        traj.t_pga = Some(2.0);
        assert_eq!(aggregate_risk(&traj, &[], &RiskConfig::default(), 1.0).unwrap(), 0.0);
        // p_rel mixes in on top of the object iteration
        let p = (1.0 - 0.9) + 0.9 * combine_object_risks(&[0.1, 0.2]);
        assert!((p - 0.352).abs() < 1e-12);
    }

    #[test]
    fn unannotated_trajectory_is_an_error() {
        let traj = cruise(0.0, 5.0, 4.0);
        assert_eq!(
            aggregate_risk(&traj, &[], &RiskConfig::default(), 1.0),
            Err(Error::MissingAnnotation)
        );
    }

    #[test]
    fn virtual_eos_object() {
        let cfg = RiskConfig {
            eos_position: 0.0,
            eos_conflict: 85.0,
            eos_speed: 8.33,
            ..RiskConfig::default()
        };
        let v = make_virtual_eos_object(&cfg, &[]).unwrap();
        assert_eq!(v.source, Source::Virtual);
        let t_reach = (cfg.eos_conflict - cfg.eos_position) / v.v;
        assert!((t_reach - 85.0 / 8.33).abs() < 1e-12);
        assert!((v.mu(t_reach) - 85.0).abs() < 1e-9);

        let inside = obj(40.0, 8.0, 0.5);
        assert!(make_virtual_eos_object(&cfg, &[inside]).is_none());

        let parked = RiskConfig { eos_speed: 0.0, ..cfg.clone() };
        let v = make_virtual_eos_object(&parked, &[]).unwrap();
        let mut traj = cruise(80.0, 4.0, 6.0);
        traj.t_pnr = Some(0.0);
        traj.t_pga = Some(6.0);
        assert!(passageway_max(&traj, &v, &parked, 0.0, 6.0) < 1e-9);
    }

    proptest::proptest! {
        #[test]
        fn risk_bounded_and_order_invariant(
            ps in proptest::collection::vec(0.0f64..=1.0, 0..8),
            p_rel in 0.0f64..=1.0,
        ) {
            let a = combine_object_risks(&ps);
            let mut rev = ps.clone();
            rev.reverse();
            proptest::prop_assert_eq!(a.to_bits(), combine_object_risks(&rev).to_bits());
            proptest::prop_assert!((0.0..=1.0).contains(&a));
            let mut more = ps.clone();
            more.push(0.3);
            proptest::prop_assert!(combine_object_risks(&more) >= a - 1e-15);
            let total = (1.0 - p_rel) + p_rel * a;
            proptest::prop_assert!((0.0..=1.0 + 1e-15).contains(&total));
        }

        #[test]
        fn wider_margins_never_reduce_risk(mu in -20.0f64..20.0, sigma in 0.1f64..5.0, extra in 0.0f64..5.0) {
            let traj = cruise(0.0, 0.0, 2.0);
            let o = obj(mu, 0.0, sigma);
            let base = RiskConfig { headway: 0.0, ..RiskConfig::default() };
            let wide = RiskConfig { s_minus_0: base.s_minus_0 + extra, s_plus_0: base.s_plus_0 + extra, ..base.clone() };
            let a = object_interval_risk(&traj, &o, &base, 1.0);
            let b = object_interval_risk(&traj, &o, &wide, 1.0);
            proptest::prop_assert!(b >= a - 1e-15);
        }
    }
}
