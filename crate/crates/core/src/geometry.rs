//! Reference paths, Frenet projection, bounding boxes and polygons.

use alloc::vec::Vec;
use core::ops::{Add, Mul, Neg, Sub};

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default lateral corridor for Frenet projection.
pub const DEFAULT_CORRIDOR: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn from_angle(angle: f64) -> Self {
        Vec2::new(angle.cos(), angle.sin())
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Counter-clockwise rotation by `angle`.
    pub fn rotate(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    /// Left-hand normal.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(v: [f64; 2]) -> Self {
        Vec2::new(v[0], v[1])
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * core::f64::consts::PI;
    let mut r = a % two_pi;
    if r <= -core::f64::consts::PI {
        r += two_pi;
    } else if r > core::f64::consts::PI {
        r -= two_pi;
    }
    r
}

/// Serialized form of a path: raw waypoints and the resampling step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSpec {
    pub waypoints: Vec<Vec2>,
    pub resample_step: f64,
}

impl PathSpec {
    pub fn build(&self) -> Result<PathRef> {
        build_path(&self.waypoints, self.resample_step)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSample {
    pub s: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub kappa: f64,
}

impl PathSample {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

/// Arc-length parametrized reference curve.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRef {
    samples: Vec<PathSample>,
    total_length: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrenetPose {
    pub s: f64,
    /// Signed lateral offset, positive left of the curve.
    pub d: f64,
}

/// Natural cubic spline through scalar knots at parameters `t`.
struct Spline1 {
    t: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl Spline1 {
    fn natural(t: &[f64], y: &[f64]) -> Self {
        let n = t.len();
        let mut m = alloc::vec![0.0; n];
        if n > 2 {
            // Thomas algorithm on the interior second derivatives.
            let k = n - 2;
            let mut diag = alloc::vec![0.0; k];
            let mut upper = alloc::vec![0.0; k];
            let mut rhs = alloc::vec![0.0; k];
            for i in 0..k {
                let h0 = t[i + 1] - t[i];
                let h1 = t[i + 2] - t[i + 1];
                diag[i] = 2.0 * (h0 + h1);
                upper[i] = h1;
                rhs[i] = 6.0 * ((y[i + 2] - y[i + 1]) / h1 - (y[i + 1] - y[i]) / h0);
            }
            for i in 1..k {
                let lower = t[i + 1] - t[i];
                let w = lower / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            let mut sol = alloc::vec![0.0; k];
            for i in (0..k).rev() {
                let next = if i + 1 < k { upper[i] * sol[i + 1] } else { 0.0 };
                sol[i] = (rhs[i] - next) / diag[i];
            }
            m[1..(k + 1)].copy_from_slice(&sol[..k]);
        }
        Spline1 {
            t: t.to_vec(),
            y: y.to_vec(),
            m,
        }
    }

    fn eval(&self, seg: usize, u: f64) -> f64 {
        let h = self.t[seg + 1] - self.t[seg];
        let a = (self.t[seg + 1] - u) / h;
        let b = (u - self.t[seg]) / h;
        a * self.y[seg]
            + b * self.y[seg + 1]
            + ((a * a * a - a) * self.m[seg] + (b * b * b - b) * self.m[seg + 1]) * h * h / 6.0
    }
}

/// Dense waypoints of a curve assembled from straights, clothoids and arcs.
#[derive(Debug, Clone)]
pub struct PathBuilder {
    pos: Vec2,
    heading: f64,
    kappa: f64,
    step: f64,
    points: Vec<Vec2>,
}

impl PathBuilder {
    pub fn new(start: Vec2, heading: f64, step: f64) -> Self {
        PathBuilder {
            pos: start,
            heading,
            kappa: 0.0,
            step,
            points: alloc::vec![start],
        }
    }

    fn advance(&mut self, len: f64, kappa_end: f64) {
        let n = (len / self.step).ceil().max(1.0) as usize;
        let ds = len / n as f64;
        let k0 = self.kappa;
        for i in 0..n {
            let ka = k0 + (kappa_end - k0) * (i as f64 + 0.5) / n as f64;
            let mid = self.heading + 0.5 * ka * ds;
            self.pos = self.pos + Vec2::from_angle(mid) * ds;
            self.heading += ka * ds;
            self.points.push(self.pos);
        }
        self.kappa = kappa_end;
    }

    pub fn straight(mut self, len: f64) -> Self {
        self.kappa = 0.0;
        self.advance(len, 0.0);
        self
    }

    /// Curvature changes linearly to `kappa_end` over `len`.
    pub fn clothoid(mut self, len: f64, kappa_end: f64) -> Self {
        self.advance(len, kappa_end);
        self
    }

    /// Constant curvature `kappa` over `len`.
    pub fn arc(mut self, len: f64, kappa: f64) -> Self {
        self.kappa = kappa;
        self.advance(len, kappa);
        self
    }

    pub fn position(&self) -> Vec2 {
        self.pos
    }

    pub fn heading(&self) -> f64 {
        self.heading
    }

    pub fn waypoints(&self) -> &[Vec2] {
        &self.points
    }

    pub fn build(&self, resample_step: f64) -> Result<PathRef> {
        build_path(&self.points, resample_step)
    }
}

/// Unit tangent at `p0` of the quadratic through `p0, p1, p2` (chord-length
/// parametrized).
fn end_tangent(p0: Vec2, p1: Vec2, p2: Vec2) -> Vec2 {
    let h1 = (p1 - p0).norm();
    let h2 = (p2 - p1).norm();
    let d = p0 * (-(2.0 * h1 + h2) / (h1 * (h1 + h2)))
        + p1 * ((h1 + h2) / (h1 * h2))
        + p2 * (-h1 / (h2 * (h1 + h2)));
    let n = d.norm();
    if n > 0.0 {
        d * (1.0 / n)
    } else {
        (p1 - p0) * (1.0 / h1)
    }
}

/// Reflection of `p` across the line through `origin` normal to `tangent`.
fn mirror_across_normal(p: Vec2, origin: Vec2, tangent: Vec2) -> Vec2 {
    let r = p - origin;
    p - tangent * (2.0 * r.dot(tangent))
}

/// Builds an arc-length resampled path through `waypoints`.
///
/// The waypoints are interpolated with a chord-length natural cubic spline,
/// resampled every `resample_step` metres, and the headings and curvatures are
/// obtained by central finite differences on the resampled polyline.
pub fn build_path(waypoints: &[Vec2], resample_step: f64) -> Result<PathRef> {
    if waypoints.len() < 3 {
        return Err(Error::DegeneratePath("at least three waypoints are required"));
    }
    if !(resample_step > 0.0) || !resample_step.is_finite() {
        return Err(Error::DegeneratePath("resample step must be positive"));
    }
    if waypoints.windows(2).any(|w| !((w[1] - w[0]).norm() > 1e-9)) {
        return Err(Error::DegeneratePath("consecutive waypoints coincide"));
    }
    // Ghost points mirrored across the end normals keep the natural end
    // conditions away from the real path; a mirrored circle stays on itself.
    let ghosts = (waypoints.len() - 1).min(3);
    let n_orig = waypoints.len();
    let mut ext: Vec<Vec2> = Vec::with_capacity(n_orig + 2 * ghosts);
    let t_start = end_tangent(waypoints[0], waypoints[1], waypoints[2]);
    for k in (1..=ghosts).rev() {
        ext.push(mirror_across_normal(waypoints[k], waypoints[0], t_start));
    }
    ext.extend_from_slice(waypoints);
    let t_end = end_tangent(waypoints[n_orig - 1], waypoints[n_orig - 2], waypoints[n_orig - 3]);
    for k in 1..=ghosts {
        ext.push(mirror_across_normal(waypoints[n_orig - 1 - k], waypoints[n_orig - 1], t_end));
    }
    let mut ext_knots = Vec::with_capacity(ext.len());
    ext_knots.push(0.0);
    for w in ext.windows(2) {
        let len = (w[1] - w[0]).norm().max(1e-9);
        ext_knots.push(ext_knots[ext_knots.len() - 1] + len);
    }
    let xs: Vec<f64> = ext.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = ext.iter().map(|p| p.y).collect();
    let sx = Spline1::natural(&ext_knots, &xs);
    let sy = Spline1::natural(&ext_knots, &ys);

    // Dense arc-length table over the spline parameter.
    const SUB: usize = 24;
    let first = ghosts;
    let last = ghosts + n_orig - 1;
    let mut table_u = Vec::with_capacity((n_orig - 1) * SUB + 1);
    let mut table_s = Vec::with_capacity(table_u.capacity());
    let mut table_seg = Vec::with_capacity(table_u.capacity());
    let mut prev = waypoints[0];
    let mut acc = 0.0;
    table_u.push(ext_knots[first]);
    table_s.push(0.0);
    table_seg.push(first);
    for seg in first..last {
        for j in 1..=SUB {
            let u = ext_knots[seg] + (ext_knots[seg + 1] - ext_knots[seg]) * j as f64 / SUB as f64;
            let p = Vec2::new(sx.eval(seg, u), sy.eval(seg, u));
            acc += (p - prev).norm();
            prev = p;
            table_u.push(u);
            table_s.push(acc);
            table_seg.push(seg);
        }
    }
    let total_length = acc;
    if total_length < resample_step {
        return Err(Error::DegeneratePath("total length is shorter than the resample step"));
    }

    let count = (total_length / resample_step).floor() as usize;
    let mut stations: Vec<f64> = (0..=count).map(|k| k as f64 * resample_step).collect();
    if total_length - stations[stations.len() - 1] > 1e-6 * resample_step {
        stations.push(total_length);
    } else {
        let last = stations.len() - 1;
        stations[last] = total_length;
    }

    let mut points = Vec::with_capacity(stations.len());
    let mut k = 0usize;
    for &s in &stations {
        while k + 1 < table_s.len() - 1 && table_s[k + 1] < s {
            k += 1;
        }
        let span = table_s[k + 1] - table_s[k];
        let f = if span > 0.0 { ((s - table_s[k]) / span).clamp(0.0, 1.0) } else { 0.0 };
        let u = table_u[k] + f * (table_u[k + 1] - table_u[k]);
        let seg = table_seg[k + 1];
        points.push(Vec2::new(sx.eval(seg, u), sy.eval(seg, u)));
    }

    let n = points.len();
    let mut heading = Vec::with_capacity(n);
    for i in 0..n {
        let (a, b) = match i {
            0 => (points[0], points[1]),
            _ if i == n - 1 => (points[n - 2], points[n - 1]),
            _ => (points[i - 1], points[i + 1]),
        };
        let d = b - a;
        heading.push(d.y.atan2(d.x));
    }
    for i in 1..n {
        heading[i] = heading[i - 1] + wrap_angle(heading[i] - heading[i - 1]);
    }
    let mut kappa = alloc::vec![0.0; n];
    if n >= 3 {
        for i in 1..n - 1 {
            kappa[i] = (heading[i + 1] - heading[i - 1]) / (stations[i + 1] - stations[i - 1]);
        }
        kappa[0] = kappa[1];
        kappa[n - 1] = kappa[n - 2];
    }

    let samples = (0..n)
        .map(|i| PathSample {
            s: stations[i],
            x: points[i].x,
            y: points[i].y,
            heading: heading[i],
            kappa: kappa[i],
        })
        .collect();
    Ok(PathRef {
        samples,
        total_length,
    })
}

impl PathRef {
    pub fn samples(&self) -> &[PathSample] {
        &self.samples
    }

    pub fn total_length(&self) -> f64 {
        self.total_length
    }

    fn segment_index(&self, s: f64) -> usize {
        let n = self.samples.len();
        if s <= self.samples[0].s {
            return 0;
        }
        if s >= self.samples[n - 1].s {
            return n - 2;
        }
        // partition_point: first sample with s > query
        let idx = self.samples.partition_point(|p| p.s <= s);
        idx.saturating_sub(1).min(n - 2)
    }

    /// Interpolated pose at arc length `s` (clamped to the path).
    pub fn sample_at(&self, s: f64) -> PathSample {
        let i = self.segment_index(s);
        let a = &self.samples[i];
        let b = &self.samples[i + 1];
        let f = ((s - a.s) / (b.s - a.s)).clamp(0.0, 1.0);
        PathSample {
            s: a.s + f * (b.s - a.s),
            x: a.x + f * (b.x - a.x),
            y: a.y + f * (b.y - a.y),
            heading: a.heading + f * (b.heading - a.heading),
            kappa: a.kappa + f * (b.kappa - a.kappa),
        }
    }

    pub fn position_at(&self, s: f64) -> Vec2 {
        self.sample_at(s).position()
    }

    pub fn kappa_at(&self, s: f64) -> f64 {
        self.sample_at(s).kappa
    }

    pub fn frenet_to_cartesian(&self, pose: FrenetPose) -> Vec2 {
        let p = self.sample_at(pose.s);
        p.position() + Vec2::from_angle(p.heading).perp() * pose.d
    }

    /// Projects with the default corridor.
    pub fn project(&self, point: Vec2) -> Result<FrenetPose> {
        project_to_frenet(self, point, DEFAULT_CORRIDOR)
    }

    /// Parallel curve at signed lateral offset `d` (positive left).
    pub fn offset(&self, d: f64) -> Result<PathRef> {
        let pts: Vec<Vec2> = self
            .samples
            .iter()
            .map(|p| p.position() + Vec2::from_angle(p.heading).perp() * d)
            .collect();
        let step = if self.samples.len() > 1 {
            self.samples[1].s - self.samples[0].s
        } else {
            1.0
        };
        build_path(&pts, step)
    }
}

/// Frenet coordinates of `point` relative to `path`.
///
/// The nearest sample is located first (ties resolved toward the smaller arc
/// length) and the foot point is refined on the two adjacent polyline
/// segments.
pub fn project_to_frenet(path: &PathRef, point: Vec2, corridor: f64) -> Result<FrenetPose> {
    let samples = &path.samples;
    let mut best = 0usize;
    let mut best_d2 = f64::INFINITY;
    for (i, p) in samples.iter().enumerate() {
        let dx = p.x - point.x;
        let dy = p.y - point.y;
        let d2 = dx * dx + dy * dy;
        if d2 < best_d2 {
            best_d2 = d2;
            best = i;
        }
    }
    let mut result: Option<(f64, FrenetPose)> = None;
    let lo = best.saturating_sub(1);
    let hi = (best + 1).min(samples.len() - 1);
    for i in lo..hi {
        let a = &samples[i];
        let b = &samples[i + 1];
        let ab = b.position() - a.position();
        let len2 = ab.dot(ab);
        let f = ((point - a.position()).dot(ab) / len2).clamp(0.0, 1.0);
        let foot = a.position() + ab * f;
        let off = point - foot;
        let dist = off.norm();
        let tangent = ab * (1.0 / len2.sqrt());
        let signed = if tangent.cross(off) >= 0.0 { dist } else { -dist };
        let cand = FrenetPose {
            s: a.s + f * (b.s - a.s),
            d: signed,
        };
        match result {
            Some((bd, _)) if bd <= dist => {}
            _ => result = Some((dist, cand)),
        }
    }
    let (dist, pose) = result.expect("path has at least two samples");
    if dist > corridor {
        return Err(Error::OutOfCorridor { distance: dist, corridor });
    }
    Ok(pose)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub center: Vec2,
    pub heading: f64,
    pub length: f64,
    pub width: f64,
}

/// Corners in the order front-left, front-right, rear-right, rear-left.
pub fn bbox_corners(b: &BoundingBox) -> [Vec2; 4] {
    let hl = 0.5 * b.length;
    let hw = 0.5 * b.width;
    [
        Vec2::new(hl, hw),
        Vec2::new(hl, -hw),
        Vec2::new(-hl, -hw),
        Vec2::new(-hl, hw),
    ]
    .map(|c| b.center + c.rotate(b.heading))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub vertices: Vec<Vec2>,
}

fn orient(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    (b - a).cross(c - a)
}

fn on_segment(a: Vec2, b: Vec2, p: Vec2) -> bool {
    p.x >= a.x.min(b.x) - 1e-12
        && p.x <= a.x.max(b.x) + 1e-12
        && p.y >= a.y.min(b.y) - 1e-12
        && p.y <= a.y.max(b.y) + 1e-12
}

/// Closed-segment intersection test.
pub fn segments_intersect(p1: Vec2, p2: Vec2, q1: Vec2, q2: Vec2) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

impl Polygon {
    pub fn new(vertices: Vec<Vec2>) -> Self {
        Polygon { vertices }
    }

    pub fn edges(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Even-odd point-in-polygon test.
    pub fn contains(&self, p: Vec2) -> bool {
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// True if the closed segment touches the polygon boundary or interior.
    pub fn intersects_segment(&self, a: Vec2, b: Vec2) -> bool {
        self.contains(a)
            || self.contains(b)
            || self.edges().any(|(p, q)| segments_intersect(a, b, p, q))
    }

    /// No two non-adjacent edges intersect.
    pub fn is_simple(&self) -> bool {
        let n = self.vertices.len();
        if n < 3 {
            return false;
        }
        let edges: Vec<(Vec2, Vec2)> = self.edges().collect();
        for i in 0..n {
            for j in (i + 1)..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    continue;
                }
                if segments_intersect(edges[i].0, edges[i].1, edges[j].0, edges[j].1) {
                    return false;
                }
            }
        }
        true
    }

    /// Rigid transform: rotate by `heading` then translate to `origin`.
    pub fn transformed(&self, origin: Vec2, heading: f64) -> Polygon {
        Polygon {
            vertices: self
                .vertices
                .iter()
                .map(|v| origin + v.rotate(heading))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    fn arc(radius: f64, angle: f64, n: usize) -> Vec<Vec2> {
        (0..=n)
            .map(|i| {
                let a = angle * i as f64 / n as f64;
                Vec2::new(radius * a.sin(), radius * (1.0 - a.cos()))
            })
            .collect()
    }

    fn straight() -> PathRef {
        build_path(
            &[Vec2::new(0.0, 0.0), Vec2::new(50.0, 0.0), Vec2::new(100.0, 0.0)],
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn straight_path_has_zero_curvature() {
        let p = straight();
        assert!((p.total_length() - 100.0).abs() < 1e-9);
        assert!(p.samples().iter().all(|s| s.kappa.abs() < 1e-12));
        assert_eq!(p.samples()[0].s, 0.0);
        assert_eq!(p.samples().last().unwrap().s, p.total_length());
    }

    #[test]
    fn arc_curvature_matches_radius() {
        let p = build_path(&arc(12.5, PI / 2.0, 90), 0.1).unwrap();
        let interior = &p.samples()[5..p.samples().len() - 5];
        for s in interior {
            assert!((s.kappa - 0.08).abs() <= 0.02 * 0.08, "kappa {}", s.kappa);
        }
    }

    #[test]
    fn semicircle_length() {
        let p = build_path(&arc(10.0, PI, 180), 0.1).unwrap();
        assert!((p.total_length() - PI * 10.0).abs() < 0.05);
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        let dup = [Vec2::new(0.0, 0.0), Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0)];
        assert!(matches!(build_path(&dup, 0.1), Err(Error::DegeneratePath(_))));
        let short = [Vec2::new(0.0, 0.0), Vec2::new(0.1, 0.0), Vec2::new(0.2, 0.0)];
        assert!(matches!(build_path(&short, 1.0), Err(Error::DegeneratePath(_))));
        let two = [Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0)];
        assert!(build_path(&two, 0.1).is_err());
    }

    #[test]
    fn frenet_axis_aligned() {
        let p = straight();
        let f = p.project(Vec2::new(5.0, 1.0)).unwrap();
        assert!((f.s - 5.0).abs() < 1e-9 && (f.d - 1.0).abs() < 1e-9);
        let f = p.project(Vec2::new(3.0, -2.5)).unwrap();
        assert!((f.s - 3.0).abs() < 1e-9 && (f.d + 2.5).abs() < 1e-9);
        let f = p.project(Vec2::new(42.0, 0.0)).unwrap();
        assert_eq!(f.d, 0.0);
    }

    #[test]
    fn frenet_corridor() {
        let p = straight();
        match p.project(Vec2::new(50.0, 25.0)) {
            Err(Error::OutOfCorridor { distance, .. }) => assert!((distance - 25.0).abs() < 1e-9),
            other => panic!("unexpected {other:?}"),
        }
        assert!(project_to_frenet(&p, Vec2::new(50.0, 25.0), 30.0).is_ok());
    }

    #[test]
    fn bbox_corner_order() {
        let b = BoundingBox {
            center: Vec2::new(0.0, 0.0),
            heading: 0.0,
            length: 4.0,
            width: 2.0,
        };
        let c = bbox_corners(&b);
        let expect = [(2.0, 1.0), (2.0, -1.0), (-2.0, -1.0), (-2.0, 1.0)];
        for (p, e) in c.iter().zip(expect) {
            assert!((p.x - e.0).abs() < 1e-12 && (p.y - e.1).abs() < 1e-12);
        }
        let c = bbox_corners(&BoundingBox { heading: PI / 2.0, ..b });
        let expect = [(-1.0, 2.0), (1.0, 2.0), (1.0, -2.0), (-1.0, -2.0)];
        for (p, e) in c.iter().zip(expect) {
            assert!((p.x - e.0).abs() < 1e-12 && (p.y - e.1).abs() < 1e-12);
        }
        let c0 = bbox_corners(&b);
        let c1 = bbox_corners(&BoundingBox { heading: 2.0 * PI, ..b });
        for (p, q) in c0.iter().zip(c1.iter()) {
            assert!((*p - *q).norm() < 1e-9);
        }
    }

    #[test]
    fn polygon_queries() {
        let sq = Polygon::new(alloc::vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(2.0, 0.0),
            Vec2::new(2.0, 2.0),
            Vec2::new(0.0, 2.0),
        ]);
        assert!(sq.is_simple());
        assert!(sq.contains(Vec2::new(1.0, 1.0)));
        assert!(!sq.contains(Vec2::new(3.0, 1.0)));
        assert!(sq.intersects_segment(Vec2::new(-1.0, 1.0), Vec2::new(3.0, 1.0)));
        assert!(!sq.intersects_segment(Vec2::new(-1.0, 3.0), Vec2::new(3.0, 3.0)));
        let bow = Polygon::new(alloc::vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(2.0, 2.0),
            Vec2::new(2.0, 0.0),
            Vec2::new(0.0, 2.0),
        ]);
        assert!(!bow.is_simple());
    }

    proptest::proptest! {
        #[test]
        fn frenet_round_trip(frac in 0.02f64..0.98, d in -3.0f64..3.0) {
            let p = build_path(&arc(25.0, PI / 2.0, 90), 0.2).unwrap();
            let s = frac * p.total_length();
            let q = p.frenet_to_cartesian(FrenetPose { s, d });
            let f = p.project(q).unwrap();
            let back = p.frenet_to_cartesian(f);
            proptest::prop_assert!((back - q).norm() < 0.2);
            proptest::prop_assert!((f.s - s).abs() < 0.2);
        }

        #[test]
        fn corner_cycle_orientation_is_heading_invariant(h in -10.0f64..10.0) {
            let b = BoundingBox { center: Vec2::new(3.0, -1.0), heading: h, length: 4.5, width: 1.8 };
            let c = bbox_corners(&b);
            // FL -> FR -> RR -> RL is clockwise: negative signed area.
            let mut area = 0.0;
            for i in 0..4 {
                area += c[i].cross(c[(i + 1) % 4]);
            }
            proptest::prop_assert!(area < 0.0);
            proptest::prop_assert!((area.abs() / 2.0 - 4.5 * 1.8).abs() < 1e-9);
        }
    }
}
