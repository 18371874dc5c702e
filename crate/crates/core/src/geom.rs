//! Planar poses, trajectories, obstacles and the ego collision proxy.

use std::f64::consts::{PI, TAU};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::CoreError;

pub type Vec2 = Vector2<f64>;

/// Wraps an angle into `(-π, π]`, rejecting non-finite input.
pub fn normalize_angle(theta: f64) -> Result<f64, CoreError> {
    if !theta.is_finite() {
        return Err(CoreError::InvalidArgument(format!(
            "angle must be finite, got {theta}"
        )));
    }
    Ok(wrap_angle(theta))
}

/// Unchecked variant of [`normalize_angle`]; NaN passes through.
#[inline]
pub fn wrap_angle(theta: f64) -> f64 {
    if theta > -PI && theta <= PI {
        return theta;
    }
    let r = theta.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    /// Always kept in `(-π, π]` by the constructors.
    pub heading: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: wrap_angle(heading),
        }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn direction(&self) -> Vec2 {
        Vec2::new(self.heading.cos(), self.heading.sin())
    }

    /// Maps a point given in this pose's body frame into the world frame.
    pub fn transform_point(&self, local: Vec2) -> Vec2 {
        let (s, c) = self.heading.sin_cos();
        Vec2::new(
            self.x + c * local.x - s * local.y,
            self.y + s * local.x + c * local.y,
        )
    }

    pub fn distance_to(&self, other: &Pose2D) -> f64 {
        (self.position() - other.position()).norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState {
    pub pose: Pose2D,
    /// Signed speed; negative means reverse gear.
    pub speed: f64,
    pub accel: f64,
    pub steer_angle: f64,
    pub timestamp: f64,
}

impl VehicleState {
    pub fn at_rest(pose: Pose2D, timestamp: f64) -> Self {
        Self {
            pose,
            speed: 0.0,
            accel: 0.0,
            steer_angle: 0.0,
            timestamp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub pose: Pose2D,
    pub speed: f64,
    pub accel: f64,
    pub curvature: f64,
    pub time_offset: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    points: Vec<TrajectoryPoint>,
    frame_id: String,
}

impl Trajectory {
    /// Builds a trajectory, checking that time offsets strictly increase.
    ///
    /// A single point is accepted: it describes a vehicle that is already
    /// at rest (the emergency-stop profile from standstill).
    pub fn new(points: Vec<TrajectoryPoint>, frame_id: impl Into<String>) -> Result<Self, CoreError> {
        if points.is_empty() {
            return Err(CoreError::InvalidArgument(
                "trajectory needs at least one point".into(),
            ));
        }
        for (i, w) in points.windows(2).enumerate() {
            if !(w[1].time_offset > w[0].time_offset) {
                return Err(CoreError::InvalidArgument(format!(
                    "time offsets must strictly increase (points {i} and {})",
                    i + 1
                )));
            }
        }
        Ok(Self {
            points,
            frame_id: frame_id.into(),
        })
    }

    pub fn points(&self) -> &[TrajectoryPoint] {
        &self.points
    }

    pub fn frame_id(&self) -> &str {
        &self.frame_id
    }

    pub fn first(&self) -> &TrajectoryPoint {
        &self.points[0]
    }

    pub fn last(&self) -> &TrajectoryPoint {
        &self.points[self.points.len() - 1]
    }

    pub fn duration(&self) -> f64 {
        self.last().time_offset - self.first().time_offset
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Samples at `t`, clamping to the first/last point outside the span.
    pub fn sample_clamped(&self, t: f64) -> TrajectoryPoint {
        if t <= self.first().time_offset {
            *self.first()
        } else if t >= self.last().time_offset {
            *self.last()
        } else {
            interpolate(self, t).expect("t is inside the trajectory span")
        }
    }
}

/// Interpolates a trajectory at time offset `t`.
///
/// Position, speed, acceleration and curvature are linear in time; heading
/// follows the shortest arc between the bracketing knots.
pub fn interpolate(traj: &Trajectory, t: f64) -> Result<TrajectoryPoint, CoreError> {
    let pts = traj.points();
    let (t0, t1) = (traj.first().time_offset, traj.last().time_offset);
    if !(t >= t0 && t <= t1) {
        return Err(CoreError::OutOfBounds(format!(
            "t = {t} outside trajectory span [{t0}, {t1}]"
        )));
    }
    // First index whose time is > t.
    let hi = pts.partition_point(|p| p.time_offset <= t);
    if hi == 0 {
        return Ok(pts[0]);
    }
    let lo = hi - 1;
    if pts[lo].time_offset == t || hi == pts.len() {
        return Ok(pts[lo]);
    }
    let (a, b) = (&pts[lo], &pts[hi]);
    let u = (t - a.time_offset) / (b.time_offset - a.time_offset);
    let lerp = |p: f64, q: f64| p + u * (q - p);
    let dh = wrap_angle(b.pose.heading - a.pose.heading);
    Ok(TrajectoryPoint {
        pose: Pose2D::new(
            lerp(a.pose.x, b.pose.x),
            lerp(a.pose.y, b.pose.y),
            a.pose.heading + u * dh,
        ),
        speed: lerp(a.speed, b.speed),
        accel: lerp(a.accel, b.accel),
        curvature: lerp(a.curvature, b.curvature),
        time_offset: t,
    })
}

/// Convex polygon with counter-clockwise vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPolygon {
    vertices: Vec<Vec2>,
}

impl ConvexPolygon {
    pub fn new(vertices: Vec<Vec2>) -> Result<Self, CoreError> {
        if vertices.len() < 3 {
            return Err(CoreError::InvalidArgument(
                "polygon needs at least 3 vertices".into(),
            ));
        }
        let n = vertices.len();
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            let c = vertices[(i + 2) % n];
            if cross(b - a, c - b) < 0.0 {
                return Err(CoreError::InvalidArgument(
                    "polygon must be convex and counter-clockwise".into(),
                ));
            }
        }
        let poly = Self { vertices };
        if poly.area() <= 0.0 {
            return Err(CoreError::InvalidArgument(
                "polygon has zero area".into(),
            ));
        }
        Ok(poly)
    }

    /// Axis-aligned rectangle centred on the origin.
    pub fn rectangle(length: f64, width: f64) -> Result<Self, CoreError> {
        let (hl, hw) = (0.5 * length, 0.5 * width);
        Self::new(vec![
            Vec2::new(-hl, -hw),
            Vec2::new(hl, -hw),
            Vec2::new(hl, hw),
            Vec2::new(-hl, hw),
        ])
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn area(&self) -> f64 {
        let n = self.vertices.len();
        0.5 * (0..n)
            .map(|i| cross(self.vertices[i], self.vertices[(i + 1) % n]))
            .sum::<f64>()
    }

    pub fn centroid(&self) -> Vec2 {
        let n = self.vertices.len() as f64;
        self.vertices.iter().sum::<Vec2>() / n
    }

    pub fn transformed(&self, pose: &Pose2D) -> ConvexPolygon {
        ConvexPolygon {
            vertices: self.vertices.iter().map(|v| pose.transform_point(*v)).collect(),
        }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        let n = self.vertices.len();
        (0..n).all(|i| {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            cross(b - a, p - a) >= 0.0
        })
    }

    /// Distance from `p` to the polygon; negative (minus the depth) inside.
    pub fn signed_distance(&self, p: Vec2) -> f64 {
        let n = self.vertices.len();
        let boundary = (0..n)
            .map(|i| point_segment_distance(p, self.vertices[i], self.vertices[(i + 1) % n]))
            .fold(f64::INFINITY, f64::min);
        if self.contains(p) {
            -boundary
        } else {
            boundary
        }
    }

    /// Minimum distance between two convex polygons, zero when they overlap.
    pub fn distance_to(&self, other: &ConvexPolygon) -> f64 {
        if self.intersects(other) {
            return 0.0;
        }
        let mut best = f64::INFINITY;
        for (poly, against) in [(self, other), (other, self)] {
            let m = against.vertices.len();
            for &p in &poly.vertices {
                for j in 0..m {
                    let d = point_segment_distance(p, against.vertices[j], against.vertices[(j + 1) % m]);
                    best = best.min(d);
                }
            }
        }
        best
    }

    /// Separating-axis overlap test.
    pub fn intersects(&self, other: &ConvexPolygon) -> bool {
        for poly in [self, other] {
            let n = poly.vertices.len();
            for i in 0..n {
                let e = poly.vertices[(i + 1) % n] - poly.vertices[i];
                let axis = Vec2::new(-e.y, e.x);
                let (a0, a1) = project(self, axis);
                let (b0, b1) = project(other, axis);
                if a1 < b0 || b1 < a0 {
                    return false;
                }
            }
        }
        true
    }
}

fn project(poly: &ConvexPolygon, axis: Vec2) -> (f64, f64) {
    poly.vertices
        .iter()
        .map(|v| v.dot(&axis))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
}

#[inline]
pub fn cross(a: Vec2, b: Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let u = if len2 > 0.0 {
        ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p - (a + ab * u)).norm()
}

/// Another road user: a convex footprint in its own body frame plus a
/// timed list of predicted poses. A single entry means the obstacle is static.
#[derive(Debug, Clone, PartialEq)]
pub struct Obstacle {
    pub id: String,
    footprint: ConvexPolygon,
    predicted: Vec<(f64, Pose2D)>,
}

impl Obstacle {
    pub fn new(
        id: impl Into<String>,
        footprint: ConvexPolygon,
        predicted: Vec<(f64, Pose2D)>,
    ) -> Result<Self, CoreError> {
        if predicted.is_empty() {
            return Err(CoreError::InvalidArgument(
                "obstacle needs at least one predicted pose".into(),
            ));
        }
        if predicted.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(CoreError::InvalidArgument(
                "obstacle prediction times must strictly increase".into(),
            ));
        }
        Ok(Self {
            id: id.into(),
            footprint,
            predicted,
        })
    }

    pub fn stationary(id: impl Into<String>, footprint: ConvexPolygon, pose: Pose2D) -> Self {
        Self {
            id: id.into(),
            footprint,
            predicted: vec![(0.0, pose)],
        }
    }

    pub fn footprint(&self) -> &ConvexPolygon {
        &self.footprint
    }

    pub fn predicted(&self) -> &[(f64, Pose2D)] {
        &self.predicted
    }

    pub fn is_static(&self) -> bool {
        self.predicted.len() == 1
    }

    /// Pose at time `t`: linear between predictions, held constant outside.
    pub fn pose_at(&self, t: f64) -> Pose2D {
        let p = &self.predicted;
        if t <= p[0].0 {
            return p[0].1;
        }
        if t >= p[p.len() - 1].0 {
            return p[p.len() - 1].1;
        }
        let hi = p.partition_point(|(ti, _)| *ti <= t);
        let (ta, a) = p[hi - 1];
        let (tb, b) = p[hi];
        let u = (t - ta) / (tb - ta);
        Pose2D::new(
            a.x + u * (b.x - a.x),
            a.y + u * (b.y - a.y),
            a.heading + u * wrap_angle(b.heading - a.heading),
        )
    }

    /// Velocity implied by the prediction around `t` (zero for static obstacles).
    pub fn velocity_at(&self, t: f64) -> Vec2 {
        let p = &self.predicted;
        if p.len() < 2 || t < p[0].0 || t >= p[p.len() - 1].0 {
            return Vec2::zeros();
        }
        let hi = p.partition_point(|(ti, _)| *ti <= t).max(1);
        let (ta, a) = p[hi - 1];
        let (tb, b) = p[hi];
        (b.position() - a.position()) / (tb - ta)
    }

    pub fn polygon_at(&self, t: f64) -> ConvexPolygon {
        self.footprint.transformed(&self.pose_at(t))
    }

    /// Copy with every predicted pose shifted by `offset`.
    pub fn translated(&self, offset: Vec2) -> Obstacle {
        Obstacle {
            id: self.id.clone(),
            footprint: self.footprint.clone(),
            predicted: self
                .predicted
                .iter()
                .map(|(t, p)| (*t, Pose2D::new(p.x + offset.x, p.y + offset.y, p.heading)))
                .collect(),
        }
    }
}

/// Ego rectangle, referenced to the rear axle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Footprint {
    pub length: f64,
    pub width: f64,
    pub rear_axle_to_tail: f64,
}

impl Footprint {
    pub fn new(length: f64, width: f64, rear_axle_to_tail: f64) -> Result<Self, CoreError> {
        let fp = Self {
            length,
            width,
            rear_axle_to_tail,
        };
        fp.validate()?;
        Ok(fp)
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        if !(self.length > 0.0 && self.width > 0.0 && self.rear_axle_to_tail > 0.0) {
            return Err(CoreError::InvalidArgument(
                "footprint dimensions must be positive".into(),
            ));
        }
        if !(self.length > self.rear_axle_to_tail) {
            return Err(CoreError::InvalidArgument(
                "footprint length must exceed rear_axle_to_tail".into(),
            ));
        }
        Ok(())
    }

    /// Distance from the rear axle to the front bumper.
    pub fn front_overhang(&self) -> f64 {
        self.length - self.rear_axle_to_tail
    }

    pub fn polygon_at(&self, pose: &Pose2D) -> ConvexPolygon {
        let (back, front, hw) = (-self.rear_axle_to_tail, self.front_overhang(), 0.5 * self.width);
        ConvexPolygon {
            vertices: [
                Vec2::new(back, -hw),
                Vec2::new(front, -hw),
                Vec2::new(front, hw),
                Vec2::new(back, hw),
            ]
            .iter()
            .map(|v| pose.transform_point(*v))
            .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle {
    pub center: Vec2,
    pub radius: f64,
}

/// Covers the footprint rectangle at `pose` with `n` equal circles spaced
/// evenly along the heading.
pub fn footprint_circles(fp: &Footprint, pose: &Pose2D, n: usize) -> Result<Vec<Circle>, CoreError> {
    if n == 0 {
        return Err(CoreError::InvalidArgument(
            "circle count must be at least 1".into(),
        ));
    }
    let step = fp.length / n as f64;
    let radius = ((0.5 * step).powi(2) + (0.5 * fp.width).powi(2)).sqrt();
    Ok((0..n)
        .map(|i| Circle {
            center: pose.transform_point(Vec2::new(
                -fp.rear_axle_to_tail + (i as f64 + 0.5) * step,
                0.0,
            )),
            radius,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn loop_normalize(mut x: f64) -> f64 {
        while x > PI {
            x -= TAU;
        }
        while x <= -PI {
            x += TAU;
        }
        x
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_angle(0.0).unwrap(), 0.0);
        assert!((normalize_angle(3.0 * PI).unwrap() - PI).abs() < 1e-12);
        assert_eq!(normalize_angle(PI).unwrap(), PI);
        assert!(normalize_angle(-PI).unwrap() > 0.0);
        let expected = loop_normalize(-7.5);
        assert!((normalize_angle(-7.5).unwrap() - expected).abs() < 1e-12);
        assert!(normalize_angle(f64::NAN).is_err());
        assert!(normalize_angle(f64::INFINITY).is_err());
    }

    fn two_point(h0: f64, h1: f64) -> Trajectory {
        let p = |x: f64, h: f64, t: f64| TrajectoryPoint {
            pose: Pose2D::new(x, 0.0, h),
            speed: x,
            accel: 0.0,
            curvature: 0.0,
            time_offset: t,
        };
        Trajectory::new(vec![p(0.0, h0, 0.0), p(2.0, h1, 1.0)], "map").unwrap()
    }

    #[test]
    fn interpolate_midpoint_and_knots() {
        let traj = two_point(0.0, 0.0);
        let mid = interpolate(&traj, 0.5).unwrap();
        assert_eq!(mid.pose.x, 1.0);
        assert_eq!(interpolate(&traj, 0.0).unwrap(), traj.points()[0]);
        assert_eq!(interpolate(&traj, 1.0).unwrap(), traj.points()[1]);
        assert!(matches!(interpolate(&traj, 1.5), Err(CoreError::OutOfBounds(_))));
        assert!(interpolate(&traj, -0.1).is_err());
    }

    #[test]
    fn interpolate_heading_takes_short_arc() {
        let traj = two_point(3.0, -3.0);
        let h = interpolate(&traj, 0.5).unwrap().pose.heading;
        // unit-vector average of the two headings
        let oracle = (3.0f64.sin() + (-3.0f64).sin()).atan2(3.0f64.cos() + (-3.0f64).cos());
        assert!((wrap_angle(h - oracle)).abs() < 1e-12, "h = {h}, oracle = {oracle}");
        assert!(h.abs() > 3.0);
    }

    #[test]
    fn single_circle_on_square() {
        let fp = Footprint::new(2.0, 2.0, 1.0).unwrap();
        let c = footprint_circles(&fp, &Pose2D::new(0.0, 0.0, 0.0), 1).unwrap();
        assert_eq!(c.len(), 1);
        assert!((c[0].radius - 2f64.sqrt()).abs() < 1e-12);
        assert!(c[0].center.norm() < 1e-12);
        assert!(footprint_circles(&fp, &Pose2D::new(0.0, 0.0, 0.0), 0).is_err());
    }

    #[test]
    fn three_circles_cover_rectangle() {
        let fp = Footprint::new(3.0, 1.0, 0.5).unwrap();
        let pose = Pose2D::new(1.0, -2.0, 0.7);
        let circles = footprint_circles(&fp, &pose, 3).unwrap();
        assert!((circles[0].radius - 0.5f64.sqrt()).abs() < 1e-12);
        for w in circles.windows(2) {
            assert!(((w[1].center - w[0].center).norm() - 1.0).abs() < 1e-12);
        }
        // deterministic lattice of 100 x 100 rectangle points
        let mut violations = 0;
        for i in 0..100 {
            for j in 0..100 {
                let lx = -fp.rear_axle_to_tail + fp.length * (i as f64 + 0.5) / 100.0;
                let ly = -0.5 * fp.width + fp.width * (j as f64 + 0.5) / 100.0;
                let p = pose.transform_point(Vec2::new(lx, ly));
                if !circles.iter().any(|c| (p - c.center).norm() <= c.radius + 1e-12) {
                    violations += 1;
                }
            }
        }
        assert_eq!(violations, 0);
    }

    #[test]
    fn circles_rotate_with_heading() {
        let fp = Footprint::new(3.0, 1.0, 0.5).unwrap();
        let a = footprint_circles(&fp, &Pose2D::new(0.0, 0.0, 0.0), 3).unwrap();
        let b = footprint_circles(&fp, &Pose2D::new(0.0, 0.0, PI / 2.0), 3).unwrap();
        for (ca, cb) in a.iter().zip(&b) {
            assert!((cb.center.x + ca.center.y).abs() < 1e-12);
            assert!((cb.center.y - ca.center.x).abs() < 1e-12);
        }
    }

    #[test]
    fn polygon_validation_and_distance() {
        assert!(ConvexPolygon::new(vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0)]).is_err());
        // clockwise
        assert!(ConvexPolygon::new(vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(0.0, 1.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(1.0, 0.0),
        ])
        .is_err());
        let sq = ConvexPolygon::rectangle(2.0, 2.0).unwrap();
        assert!((sq.area() - 4.0).abs() < 1e-12);
        assert!((sq.signed_distance(Vec2::new(3.0, 0.0)) - 2.0).abs() < 1e-12);
        assert!((sq.signed_distance(Vec2::new(0.5, 0.0)) + 0.5).abs() < 1e-12);
        let other = sq.transformed(&Pose2D::new(5.0, 0.0, 0.0));
        assert!((sq.distance_to(&other) - 3.0).abs() < 1e-12);
        let overlapping = sq.transformed(&Pose2D::new(1.5, 0.0, 0.3));
        assert_eq!(sq.distance_to(&overlapping), 0.0);
    }

    #[test]
    fn obstacle_prediction_interpolates() {
        let poly = ConvexPolygon::rectangle(1.0, 1.0).unwrap();
        let obs = Obstacle::new(
            "car",
            poly,
            vec![(0.0, Pose2D::new(0.0, 0.0, 0.0)), (2.0, Pose2D::new(4.0, 0.0, 0.0))],
        )
        .unwrap();
        assert!((obs.pose_at(1.0).x - 2.0).abs() < 1e-12);
        assert_eq!(obs.pose_at(5.0).x, 4.0);
        assert!((obs.velocity_at(1.0).x - 2.0).abs() < 1e-12);
        assert_eq!(obs.velocity_at(3.0).x, 0.0);
    }

    proptest::proptest! {
        #[test]
        fn normalize_is_idempotent_and_in_range(x in -1e6f64..1e6) {
            let y = normalize_angle(x).unwrap();
            proptest::prop_assert!(y > -PI && y <= PI);
            proptest::prop_assert_eq!(normalize_angle(y).unwrap(), y);
            proptest::prop_assert!(((x - y) / TAU - ((x - y) / TAU).round()).abs() < 1e-6);
        }
    }
}
