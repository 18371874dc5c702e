//! Speed profiles over planned paths and the emergency-stop profile.

use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::geom::{Pose2D, Trajectory, TrajectoryPoint, VehicleState};

pub const FRAME_ID: &str = "map";
const CURVATURE_EPS: f64 = 1e-9;
/// Sample period of the emergency-stop profile.
const EMERGENCY_DT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicLimits {
    pub v_max: f64,
    pub a_max: f64,
    /// Braking limit, negative.
    pub a_min: f64,
    pub a_lat_max: f64,
    pub jerk_max: f64,
}

impl Default for DynamicLimits {
    fn default() -> Self {
        Self {
            v_max: 5.0,
            a_max: 1.0,
            a_min: -2.0,
            a_lat_max: 1.5,
            jerk_max: 2.0,
        }
    }
}

impl DynamicLimits {
    pub fn validate(&self) -> Result<(), CoreError> {
        if self.v_max > 0.0 && self.a_max > 0.0 && self.a_min < 0.0 && self.a_lat_max > 0.0 && self.jerk_max > 0.0 {
            Ok(())
        } else {
            Err(CoreError::InvalidArgument(format!("invalid dynamic limits {self:?}")))
        }
    }

    pub fn stopping_distance(&self, speed: f64) -> f64 {
        speed * speed / (2.0 * -self.a_min)
    }
}

/// One sample of a geometric path handed to the speed planner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathPoint {
    pub pose: Pose2D,
    pub curvature: f64,
    pub s: f64,
    pub speed_limit: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TrajectorySource {
    Nominal,
    Emergency,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannedTrajectory {
    pub trajectory: Trajectory,
    pub tick_id: u64,
    pub source: TrajectorySource,
    /// Simulated time at which `time_offset = 0`.
    pub stamp: f64,
    /// The start speed was above the local speed cap and was kept anyway.
    pub initial_speed_over_cap: bool,
}

/// Speed cap at a path point.
pub fn speed_cap(p: &PathPoint, limits: &DynamicLimits) -> f64 {
    limits
        .v_max
        .min(p.speed_limit)
        .min((limits.a_lat_max / p.curvature.abs().max(CURVATURE_EPS)).sqrt())
}

/// Forward pass from `v0` under `a_max`, then backward pass to `v_end`
/// under `a_min`. `ds[i]` is the distance from point `i` to `i + 1`.
/// `v[0]` is pinned to `v0`.
pub fn forward_backward(caps: &[f64], ds: &[f64], v0: f64, v_end: f64, limits: &DynamicLimits) -> Vec<f64> {
    let n = caps.len();
    let mut v = caps.to_vec();
    v[0] = v0;
    for i in 1..n {
        v[i] = v[i].min((v[i - 1] * v[i - 1] + 2.0 * limits.a_max * ds[i - 1]).sqrt());
    }
    v[n - 1] = v[n - 1].min(v_end);
    for i in (1..n - 1).rev() {
        v[i] = v[i].min((v[i + 1] * v[i + 1] - 2.0 * limits.a_min * ds[i]).sqrt());
    }
    v
}

/// Time-parameterizes a path under the dynamic limits.
pub fn time_parameterize(
    path: &[PathPoint],
    limits: &DynamicLimits,
    v0: f64,
    v_end: f64,
) -> Result<PlannedTrajectory, CoreError> {
    limits.validate()?;
    if path.len() < 2 {
        return Err(CoreError::InvalidArgument("path needs at least two samples".into()));
    }
    if !(v0 >= 0.0) || !(v_end >= 0.0) {
        return Err(CoreError::InvalidArgument("v0 and v_end must be non-negative".into()));
    }
    let ds: Vec<f64> = path.windows(2).map(|w| w[1].s - w[0].s).collect();
    if ds.iter().any(|d| !(*d > 0.0)) {
        return Err(CoreError::InvalidArgument("path arc length must strictly increase".into()));
    }
    let caps: Vec<f64> = path.iter().map(|p| speed_cap(p, limits)).collect();
    let over_cap = v0 > caps[0] + 1e-9;
    let v = forward_backward(&caps, &ds, v0, v_end, limits);
    let brake_bound = (v[1] * v[1] - 2.0 * limits.a_min * ds[0]).sqrt();
    if !over_cap && brake_bound < v0 - 1e-9 {
        return Err(CoreError::InfeasibleProfile(format!(
            "cannot slow from {v0:.3} m/s to meet the end speed {v_end:.3} m/s within {:.3} m",
            path[path.len() - 1].s - path[0].s
        )));
    }
    Ok(PlannedTrajectory {
        trajectory: assemble(path, &v, &ds)?,
        tick_id: 0,
        source: TrajectorySource::Nominal,
        stamp: 0.0,
        initial_speed_over_cap: over_cap,
    })
}

/// Like [`time_parameterize`] but lowers the start speed instead of failing
/// when the end condition cannot be met from `v0`.
pub fn time_parameterize_lenient(
    path: &[PathPoint],
    limits: &DynamicLimits,
    v0: f64,
    v_end: f64,
) -> Result<PlannedTrajectory, CoreError> {
    match time_parameterize(path, limits, v0, v_end) {
        Err(CoreError::InfeasibleProfile(_)) => {
            let ds: Vec<f64> = path.windows(2).map(|w| w[1].s - w[0].s).collect();
            let caps: Vec<f64> = path.iter().map(|p| speed_cap(p, limits)).collect();
            let v = forward_backward(&caps, &ds, 0.0, v_end, limits);
            let reachable = (v[1] * v[1] - 2.0 * limits.a_min * ds[0]).sqrt();
            time_parameterize(path, limits, v0.min(reachable).min(caps[0]), v_end)
        }
        other => other,
    }
}

fn assemble(path: &[PathPoint], v: &[f64], ds: &[f64]) -> Result<Trajectory, CoreError> {
    let n = path.len();
    let mut points = Vec::with_capacity(n);
    let mut t = 0.0;
    for i in 0..n {
        let accel = if i + 1 < n {
            (v[i + 1] * v[i + 1] - v[i] * v[i]) / (2.0 * ds[i])
        } else if v[i] > 0.0 {
            points.last().map_or(0.0, |p: &TrajectoryPoint| p.accel)
        } else {
            0.0
        };
        points.push(TrajectoryPoint {
            pose: path[i].pose,
            speed: v[i],
            accel,
            curvature: path[i].curvature,
            time_offset: t,
        });
        if i + 1 < n {
            let vbar = v[i] + v[i + 1];
            if vbar <= 0.0 {
                // The profile comes to rest here; nothing further is reached.
                points.last_mut().expect("just pushed").accel = 0.0;
                break;
            }
            t += 2.0 * ds[i] / vbar;
        }
    }
    Trajectory::new(points, FRAME_ID)
}

/// Single forward pass limiting how fast acceleration may build up.
///
/// Speeds are only ever lowered, so speed caps, the braking limit and the end
/// speed stay satisfied; braking onset is left untouched, so this is an
/// approximation of a jerk bound rather than a guarantee.
pub fn smooth_jerk(planned: &PlannedTrajectory, limits: &DynamicLimits) -> Result<PlannedTrajectory, CoreError> {
    let pts = planned.trajectory.points();
    if pts.len() < 3 {
        return Ok(planned.clone());
    }
    let mut path = Vec::with_capacity(pts.len());
    let mut s = 0.0;
    for (i, p) in pts.iter().enumerate() {
        if i > 0 {
            s += pts[i - 1].pose.distance_to(&p.pose);
        }
        path.push(PathPoint {
            pose: p.pose,
            curvature: p.curvature,
            s,
            speed_limit: p.speed,
        });
    }
    let ds: Vec<f64> = path.windows(2).map(|w| w[1].s - w[0].s).collect();
    let mut v: Vec<f64> = pts.iter().map(|p| p.speed).collect();
    let mut prev_accel = limits.a_max;
    let mut prev_dt = f64::INFINITY;
    for i in 0..v.len() - 1 {
        let allowed = (prev_accel.max(0.0) + limits.jerk_max * prev_dt).min(limits.a_max);
        let a = (v[i + 1] * v[i + 1] - v[i] * v[i]) / (2.0 * ds[i]);
        if a > allowed {
            v[i + 1] = (v[i] * v[i] + 2.0 * allowed * ds[i]).sqrt().min(v[i + 1]);
        }
        let a = (v[i + 1] * v[i + 1] - v[i] * v[i]) / (2.0 * ds[i]);
        let vbar = v[i] + v[i + 1];
        prev_dt = if vbar > 0.0 { 2.0 * ds[i] / vbar } else { 0.0 };
        prev_accel = a;
    }
    Ok(PlannedTrajectory {
        trajectory: assemble(&path, &v, &ds)?,
        ..planned.clone()
    })
}

/// Straight-line constant-deceleration stop from the current state.
pub fn emergency_stop(state: &VehicleState, limits: &DynamicLimits) -> PlannedTrajectory {
    let speed = state.speed.abs();
    let sign = if state.speed < 0.0 { -1.0 } else { 1.0 };
    let decel = -limits.a_min;
    let dir = state.pose.direction() * sign;
    let at = |t: f64, v: f64, a: f64| {
        let dist = speed * t - 0.5 * decel * t * t;
        let p = state.pose.position() + dir * dist;
        TrajectoryPoint {
            pose: Pose2D::new(p.x, p.y, state.pose.heading),
            speed: sign * v,
            accel: a,
            curvature: 0.0,
            time_offset: t,
        }
    };
    let points = if speed <= 1e-9 {
        vec![at(0.0, 0.0, 0.0)]
    } else {
        let stop_time = speed / decel;
        let steps = (stop_time / EMERGENCY_DT).ceil() as usize;
        let mut pts = Vec::with_capacity(steps + 1);
        for k in 0..steps {
            let t = k as f64 * EMERGENCY_DT;
            if t >= stop_time {
                break;
            }
            pts.push(at(t, speed - decel * t, -sign * decel));
        }
        pts.push(at(stop_time, 0.0, 0.0));
        pts
    };
    PlannedTrajectory {
        trajectory: Trajectory::new(points, FRAME_ID).expect("emergency profile times increase"),
        tick_id: 0,
        source: TrajectorySource::Emergency,
        stamp: state.timestamp,
        initial_speed_over_cap: false,
    }
}

/// Single-point trajectory holding the vehicle at `pose`.
pub fn standstill(pose: Pose2D, stamp: f64) -> PlannedTrajectory {
    let point = TrajectoryPoint {
        pose,
        speed: 0.0,
        accel: 0.0,
        curvature: 0.0,
        time_offset: 0.0,
    };
    PlannedTrajectory {
        trajectory: Trajectory::new(vec![point], FRAME_ID).expect("single point"),
        tick_id: 0,
        source: TrajectorySource::Nominal,
        stamp,
        initial_speed_over_cap: false,
    }
}
