//! Fixed-step closed-loop simulation on the simulated clock.
//!
//! Every control tick runs state estimation, the tracking controller and the
//! plant. Every `control_hz / plan_hz` ticks the planner takes an obstacle
//! snapshot and runs behavior selection, the Frenet lattice and the speed
//! profile; its trajectory replaces the active one at that tick boundary.

use std::time::Instant;

use hercules_core::behavior::{classify_context, decide_maneuver, LeadInfo, Maneuver, ManeuverKind, ManeuverState, SignalState};
use hercules_core::control::{ControlCommand, ControlMode, Controller, Longitudinal, StateEstimator};
use hercules_core::frenet::{
    build_lattice, chain_cost, chain_to_path, project_to_frenet, score_lattice, search_min_cost, ScoringContext,
};
use hercules_core::geom::{cross, point_segment_distance};
use hercules_core::motion::{
    emergency_stop, smooth_jerk, standstill, time_parameterize_lenient, DynamicLimits, PathPoint,
    PlannedTrajectory,
};
use hercules_core::{Obstacle, Pose2D, Trajectory, Vec2, VehicleState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::SimError;
use crate::metrics::{compute_metrics, Metrics};
use crate::plant::{integrate, latency_ticks, DelayLine, PlantParams, STANDSTILL_SPEED};
use crate::scenario::{LatencySpec, Override, Scenario, World};

/// Headroom on the deceleration a stop needs, so small tracking lag does
/// not turn into an overshoot.
const STOP_DECEL_MARGIN: f64 = 1.1;

/// Why the vehicle is in an emergency stop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EsCause {
    NoFeasiblePath,
    Clearance,
    Dropout,
}

impl EsCause {
    pub fn as_str(&self) -> &'static str {
        match self {
            EsCause::NoFeasiblePath => "NoFeasiblePath",
            EsCause::Clearance => "Clearance",
            EsCause::Dropout => "Dropout",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Completed,
    Timeout,
    Collision,
}

/// One control tick. The state is the plant state at `t`, before the tick's
/// command is applied.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlRecord {
    pub tick: u64,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub v: f64,
    pub a: f64,
    pub steer: f64,
    /// Command computed at this tick.
    pub command: ControlCommand,
    /// Command leaving the delay line and actuated during this tick.
    pub applied: ControlCommand,
    pub mode: ControlMode,
    pub maneuver: ManeuverKind,
    pub es_cause: Option<EsCause>,
    pub trajectory_id: u64,
    /// Lateral distance to the active trajectory.
    pub cross_track: f64,
    /// Ground-truth distance from the ego footprint to the nearest obstacle.
    pub clearance: Option<f64>,
    /// The controller failed and a braking command was substituted.
    pub controller_fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanRecord {
    pub tick: u64,
    pub t: f64,
    /// Trajectory active after this plan tick.
    pub trajectory_id: u64,
    pub maneuver: ManeuverKind,
    pub es_cause: Option<EsCause>,
    pub lattice_nodes: usize,
    pub lattice_edges: usize,
    pub chosen_cost: Option<f64>,
    /// Real time spent planning; the only non-deterministic field of the log.
    pub wall_time_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObstacleTrace {
    pub id: String,
    /// Footprint at `t = 0`, world frame.
    pub polygon: Vec<[f64; 2]>,
    pub waypoints: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimLog {
    pub scenario: String,
    pub seed: u64,
    pub control_hz: u32,
    pub plan_hz: u32,
    pub latency_ticks: usize,
    pub goal: [f64; 2],
    pub goal_radius: f64,
    pub safety_margin: f64,
    pub merge_window: f64,
    pub reference: Vec<[f64; 2]>,
    pub obstacles: Vec<ObstacleTrace>,
    pub control: Vec<ControlRecord>,
    pub plans: Vec<PlanRecord>,
    pub outcome: Outcome,
}

impl SimLog {
    /// SHA-256 over the whole log with planning wall times zeroed.
    pub fn fingerprint(&self) -> String {
        let mut canonical = self.clone();
        for p in &mut canonical.plans {
            p.wall_time_ms = 0.0;
        }
        let bytes = serde_json::to_vec(&canonical).expect("log serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Applies `overrides`, validates, simulates and scores.
pub fn run_scenario(scenario: &Scenario, overrides: &[Override]) -> Result<(SimLog, Metrics), SimError> {
    let sc = scenario.with_overrides(overrides)?;
    let world = sc.validate()?;
    let log = simulate(&sc, &world)?;
    let metrics = compute_metrics(&log);
    Ok((log, metrics))
}

/// Perpendicular distance from `p` to the nearest segment of `traj`.
pub fn lateral_error(traj: &Trajectory, p: Vec2) -> f64 {
    let pts = traj.points();
    let mut best = (f64::INFINITY, 0.0);
    for w in pts.windows(2) {
        let (a, b) = (w[0].pose.position(), w[1].pose.position());
        let len = (b - a).norm();
        if len <= 1e-12 {
            continue;
        }
        let dist = point_segment_distance(p, a, b);
        if dist < best.0 {
            best = (dist, cross((b - a) / len, p - a).abs());
        }
    }
    if best.0.is_finite() {
        best.1
    } else {
        let a = pts[0].pose;
        cross(a.direction(), p - a.position()).abs()
    }
}

/// Obstacle footprint in path coordinates at the snapshot time.
#[derive(Debug, Clone, Copy)]
struct FrenetBox {
    s_min: f64,
    s_max: f64,
    d_min: f64,
    d_max: f64,
    /// Velocity component along the path.
    speed: f64,
}

fn overlaps(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 <= b.1 && b.0 <= a.1
}

struct PlanResult {
    trajectory: Option<PlannedTrajectory>,
    maneuver: ManeuverKind,
    es_cause: Option<EsCause>,
    lattice_nodes: usize,
    lattice_edges: usize,
    chosen_cost: Option<f64>,
}

impl PlanResult {
    fn stop(cause: EsCause) -> Self {
        Self {
            trajectory: None,
            maneuver: ManeuverKind::EmergencyStop,
            es_cause: Some(cause),
            lattice_nodes: 0,
            lattice_edges: 0,
            chosen_cost: None,
        }
    }
}

struct Sim<'a> {
    sc: &'a Scenario,
    world: &'a World,
    rng: ChaCha8Rng,
    noise: Option<Normal<f64>>,
    behavior: ManeuverState,
    active: PlannedTrajectory,
    maneuver: ManeuverKind,
    es_cause: Option<EsCause>,
    next_id: u64,
}

impl Sim<'_> {
    fn publish(&mut self, mut traj: PlannedTrajectory, t: f64) {
        traj.tick_id = self.next_id;
        traj.stamp = t;
        self.next_id += 1;
        self.active = traj;
    }

    fn enter_stop(&mut self, cause: EsCause, est: &VehicleState) {
        if self.maneuver != ManeuverKind::EmergencyStop {
            let traj = emergency_stop(est, &self.sc.vehicle.limits);
            self.publish(traj, est.timestamp);
            self.maneuver = ManeuverKind::EmergencyStop;
            self.es_cause = Some(cause);
        }
    }

    /// Ground-truth obstacles as perceived at `t`: current pose plus noise,
    /// with a constant-velocity prediction for moving ones.
    fn snapshot(&mut self, t: f64) -> Vec<Obstacle> {
        let horizon = self.sc.planner.prediction_horizon;
        let mut out = Vec::with_capacity(self.world.obstacles.len());
        for o in &self.world.obstacles {
            let pose = o.pose_at(t);
            let vel = o.velocity_at(t);
            let fp = o.footprint().clone();
            let mut ob = if vel == Vec2::zeros() {
                Obstacle::stationary(o.id.clone(), fp, pose)
            } else {
                let ahead = Pose2D::new(pose.x + vel.x * horizon, pose.y + vel.y * horizon, pose.heading);
                Obstacle::new(o.id.clone(), fp, vec![(t, pose), (t + horizon, ahead)]).expect("horizon is positive")
            };
            if let Some(n) = self.noise {
                let off = Vec2::new(n.sample(&mut self.rng), n.sample(&mut self.rng));
                ob = ob.translated(off);
            }
            out.push(ob);
        }
        out
    }

    fn frenet_box(&self, o: &Obstacle, t: f64) -> Option<FrenetBox> {
        let path = &self.world.path;
        let corridor = self.sc.planner.projection_corridor;
        let poly = o.polygon_at(t);
        let mut b = FrenetBox {
            s_min: f64::INFINITY,
            s_max: f64::NEG_INFINITY,
            d_min: f64::INFINITY,
            d_max: f64::NEG_INFINITY,
            speed: 0.0,
        };
        for v in poly.vertices() {
            let fs = project_to_frenet(path, &Pose2D::new(v.x, v.y, 0.0), 0.0, corridor).ok()?;
            b.s_min = b.s_min.min(fs.s);
            b.s_max = b.s_max.max(fs.s);
            b.d_min = b.d_min.min(fs.d);
            b.d_max = b.d_max.max(fs.d);
        }
        let (_, heading, _) = path.eval(0.5 * (b.s_min + b.s_max));
        b.speed = o.velocity_at(t).dot(&Vec2::new(heading.cos(), heading.sin()));
        Some(b)
    }

    fn plan(&mut self, t: f64, est: &VehicleState) -> Result<PlanResult, SimError> {
        let sc = self.sc;
        let p = &sc.planner;
        let path = &self.world.path;
        let limits = &sc.vehicle.limits;
        let fp = sc.vehicle.footprint;

        let (origin, v0) = self.plan_origin(est, t);
        let Ok(fs) = project_to_frenet(path, &origin, v0, p.projection_corridor) else {
            return Ok(PlanResult::stop(EsCause::NoFeasiblePath));
        };
        let snapshot = self.snapshot(t);
        let ego_poly = fp.polygon_at(&est.pose);
        let seen_clearance = snapshot
            .iter()
            .map(|o| ego_poly.distance_to(&o.polygon_at(t)))
            .fold(f64::INFINITY, f64::min);
        if seen_clearance < p.safety_margin {
            return Ok(PlanResult::stop(EsCause::Clearance));
        }

        // Lead: nearest obstacle ahead of the front bumper overlapping the own lane.
        let boxes: Vec<Option<FrenetBox>> = snapshot.iter().map(|o| self.frenet_box(o, t)).collect();
        // While overtaking, the obstacle being passed stays the lead until the
        // rear bumper is clear of it.
        let front = fs.s + fp.front_overhang();
        let rear = fs.s - fp.rear_axle_to_tail;
        let overtaking = self.behavior.maneuver.kind() == ManeuverKind::Overtake;
        let band = (-p.lead_half_width, p.lead_half_width);
        let lead = boxes
            .iter()
            .enumerate()
            .filter_map(|(i, b)| b.map(|b| (i, b)))
            .filter(|(_, b)| {
                overlaps((b.d_min, b.d_max), band)
                    && (b.s_min > front || (overtaking && b.s_max > rear - p.overtake_return_gap))
            })
            .min_by(|a, b| a.1.s_min.total_cmp(&b.1.s_min).then(a.0.cmp(&b.0)));
        let lead_info = lead.map_or(LeadInfo::none(), |(_, b)| LeadInfo::at((b.s_min - front).max(0.0), b.speed));
        let adjacent_free = match lead {
            None => true,
            Some((li, lb)) => {
                let off = sc.behavior.overtake_offset;
                let lane = (off - p.lead_half_width, off + p.lead_half_width);
                let span = (fs.s, lb.s_max + p.overtake_clearance);
                !overlaps((lb.d_min, lb.d_max), lane)
                    && boxes.iter().enumerate().all(|(i, b)| {
                        i == li || b.is_none_or(|b| !(overlaps((b.d_min, b.d_max), lane) && overlaps((b.s_min, b.s_max), span)))
                    })
            }
        };

        let s_ctx = fs.s.clamp(0.0, path.length() * (1.0 - 1e-12));
        let ctx = classify_context(path, s_ctx, &self.world.signals, t, &sc.behavior)?;
        self.behavior = decide_maneuver(est, &ctx, &lead_info, adjacent_free, &self.behavior, t, &sc.behavior);
        let m = self.behavior.maneuver;
        if m == Maneuver::EmergencyStop {
            return Ok(PlanResult::stop(EsCause::Clearance));
        }

        let v_ref = ctx.speed_limit.min(limits.v_max);
        let keep_lead = m.kind() == ManeuverKind::Overtake;
        let lattice_obstacles: Vec<Obstacle> = snapshot
            .iter()
            .enumerate()
            .filter(|(i, _)| keep_lead || lead.map(|l| l.0) != Some(*i))
            .map(|(_, o)| o.clone())
            .collect();
        let remaining = path.length() - fs.s;
        if remaining < p.trajectory_spacing {
            return Ok(self.hold(m.kind(), est, t));
        }
        let lattice = match build_lattice(&fs, &p.lattice, path.length(), p.corridor_half_width, v_ref) {
            Ok(l) => l,
            Err(_) => return Ok(PlanResult::stop(EsCause::NoFeasiblePath)),
        };
        let scoring = ScoringContext {
            path,
            obstacles: &lattice_obstacles,
            footprint: fp,
            n_circles: p.n_circles,
            safety_margin: p.safety_margin,
            v_ref,
            preferred_d: m.offset(),
            weights: p.weights,
            plan_time: t,
            ego_s: fs.s,
        };
        let scored = score_lattice(&lattice, &scoring)?;
        let Ok(chain) = search_min_cost(&scored) else {
            let mut r = PlanResult::stop(EsCause::NoFeasiblePath);
            r.lattice_nodes = lattice.node_count();
            r.lattice_edges = lattice.edge_count();
            return Ok(r);
        };
        let mut pts = chain_to_path(path, &chain, p.trajectory_spacing)?;

        // Where the profile has to end and at what speed.
        let mut stop: Option<(f64, f64)> = None;
        let mut limit = |dist: f64, v: f64| {
            if stop.is_none_or(|(d, _)| dist < d) {
                stop = Some((dist, v));
            }
        };
        let reaches_end = lattice.stations.last().is_some_and(|&s| s >= path.length() - 1e-9);
        if reaches_end {
            limit(remaining, 0.0);
        }
        if m.kind() == ManeuverKind::PullOver {
            match ctx.stop_line_s {
                Some(line) if ctx.traffic_signal == SignalState::Red => {
                    // a vehicle already over its stop point holds where it is
                    limit((line - fp.front_overhang() - p.stop_line_margin - fs.s).max(0.0), 0.0);
                }
                _ => limit(remaining, 0.0),
            }
        }
        if lead_info.present && !keep_lead {
            limit(lead_info.gap - sc.behavior.standstill_gap, lead_info.speed.clamp(0.0, v_ref));
        }
        let v_end = match stop {
            Some((dist, v)) => {
                let total = pts.last().map_or(0.0, |q| q.s);
                if dist < total {
                    if dist < 0.5 * p.trajectory_spacing {
                        return Ok(self.hold(m.kind(), est, t));
                    }
                    truncate(&mut pts, dist);
                }
                if dist < total || reaches_end || v == 0.0 {
                    v
                } else {
                    pts.last().map_or(0.0, |q| q.speed_limit)
                }
            }
            None => pts.last().map_or(0.0, |q| q.speed_limit),
        };
        if pts.len() < 2 {
            return Ok(self.hold(m.kind(), est, t));
        }
        // Brake at the comfortable rate when that suffices, otherwise spread
        // the required deceleration over the remaining distance.
        let dist = pts.last().map_or(0.0, |q| q.s);
        let needed = if v_end < v0 && dist > 0.0 {
            (v0 * v0 - v_end * v_end) / (2.0 * dist)
        } else {
            0.0
        };
        let decel = if needed <= p.comfort_decel {
            p.comfort_decel
        } else {
            for q in &mut pts {
                q.speed_limit = q.speed_limit.min(v0);
            }
            needed * STOP_DECEL_MARGIN
        };
        let profile_limits = DynamicLimits {
            a_min: limits.a_min.max(-decel),
            ..*limits
        };
        let profile = time_parameterize_lenient(&pts, &profile_limits, v0, v_end);
        let planned = match profile {
            Ok(tr) => tr,
            Err(e) => {
                log::debug!("t={t}: speed profile failed: {e}");
                return Ok(PlanResult::stop(EsCause::NoFeasiblePath));
            }
        };
        let planned = smooth_jerk(&planned, limits).unwrap_or(planned);
        Ok(PlanResult {
            trajectory: Some(planned),
            maneuver: m.kind(),
            es_cause: None,
            lattice_nodes: lattice.node_count(),
            lattice_edges: lattice.edge_count(),
            chosen_cost: Some(chain_cost(&chain)),
        })
    }

    /// Where a new plan starts: the previous plan's state at `t` while the
    /// vehicle tracks it, so tracking error stays visible to the controller;
    /// the measured state otherwise.
    fn plan_origin(&self, est: &VehicleState, t: f64) -> (Pose2D, f64) {
        let measured = (est.pose, est.speed.max(0.0));
        if self.maneuver == ManeuverKind::EmergencyStop {
            return measured;
        }
        let r = self.active.trajectory.sample_clamped(t - self.active.stamp);
        let p = &self.sc.planner;
        if (r.speed - measured.1).abs() <= p.stitch_tolerance && r.pose.distance_to(&est.pose) <= p.stitch_distance {
            (r.pose, r.speed)
        } else {
            measured
        }
    }

    /// No room left for a new plan: a moving vehicle keeps finishing the
    /// active stop, a stationary one holds where it is.
    fn hold(&self, kind: ManeuverKind, est: &VehicleState, t: f64) -> PlanResult {
        let trajectory = if est.speed.abs() > STANDSTILL_SPEED {
            None
        } else {
            Some(standstill(est.pose, t))
        };
        PlanResult {
            trajectory,
            maneuver: kind,
            es_cause: None,
            lattice_nodes: 0,
            lattice_edges: 0,
            chosen_cost: None,
        }
    }
}

/// Cuts `pts` at arc length `s`, interpolating the last point.
fn truncate(pts: &mut Vec<PathPoint>, s: f64) {
    let k = pts.partition_point(|q| q.s <= s);
    if k == 0 || k >= pts.len() {
        return;
    }
    let (a, b) = (pts[k - 1], pts[k]);
    pts.truncate(k);
    if s - a.s > 1e-6 {
        let u = (s - a.s) / (b.s - a.s);
        let pos = a.pose.position() + (b.pose.position() - a.pose.position()) * u;
        pts.push(PathPoint {
            pose: Pose2D::new(pos.x, pos.y, a.pose.heading + u * hercules_core::geom::wrap_angle(b.pose.heading - a.pose.heading)),
            curvature: a.curvature + u * (b.curvature - a.curvature),
            s,
            speed_limit: a.speed_limit.min(b.speed_limit),
        });
    }
}

/// Runs a validated scenario to goal, timeout or collision.
pub fn simulate(sc: &Scenario, world: &World) -> Result<SimLog, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    let latency = match sc.latency {
        LatencySpec::Fixed(l) => l,
        LatencySpec::Range([lo, hi]) if hi > lo => rng.random_range(lo..=hi),
        LatencySpec::Range([lo, _]) => lo,
    };
    let hz = sc.rates.control_hz;
    let dt = sc.rates.dt();
    let per_plan = sc.rates.ticks_per_plan();
    let lat_ticks = latency_ticks(latency, f64::from(hz));
    let limits = sc.vehicle.limits;
    let fp = sc.vehicle.footprint;
    let plant: PlantParams = sc.vehicle.plant();

    let mut controller = Controller::new(sc.vehicle.controller)?;
    let mut estimator = StateEstimator::new(sc.vehicle.controller.estimator_tau);
    let hold = ControlCommand {
        steer_angle: 0.0,
        longitudinal: Longitudinal::Speed(0.0),
    };
    let mut line = DelayLine::new(lat_ticks, hold);
    let noise = (sc.planner.obstacle_noise_sigma > 0.0)
        .then(|| Normal::new(0.0, sc.planner.obstacle_noise_sigma).expect("validated sigma"));
    let mut sim = Sim {
        sc,
        world,
        rng,
        noise,
        behavior: ManeuverState::initial(0.0),
        active: standstill(world.start, 0.0),
        maneuver: ManeuverKind::LaneKeep,
        es_cause: None,
        next_id: 1,
    };
    let mut state = VehicleState::at_rest(world.start, 0.0);
    let mut control = Vec::new();
    let mut plans = Vec::new();
    let max_tick = (sc.timeout * f64::from(hz)).ceil() as u64;
    let goal = world.goal;
    let mut outcome = Outcome::Timeout;

    for tick in 0..=max_tick {
        let t = tick as f64 / f64::from(hz);
        state.timestamp = t;

        let ego_poly = fp.polygon_at(&state.pose);
        let mut clearance: Option<f64> = None;
        let mut collided = false;
        for o in &world.obstacles {
            let poly = o.polygon_at(t);
            collided |= ego_poly.intersects(&poly);
            let d = ego_poly.distance_to(&poly);
            clearance = Some(clearance.map_or(d, |c| c.min(d)));
        }

        estimator.push(&state);
        let est = estimator.estimate(t)?;

        let link_down = sc.link.is_down(t);
        if link_down && sim.es_cause != Some(EsCause::Dropout) {
            // Out of line: stop now, without waiting for the next plan tick.
            sim.maneuver = ManeuverKind::LaneKeep;
            sim.enter_stop(EsCause::Dropout, &est);
        }
        if tick % per_plan == 0 {
            let started = Instant::now();
            let result = if link_down {
                None
            } else {
                Some(sim.plan(t, &est)?)
            };
            let wall_time_ms = started.elapsed().as_secs_f64() * 1e3;
            let (nodes, edges, cost) = match result {
                None => (0, 0, None),
                Some(r) => {
                    let stats = (r.lattice_nodes, r.lattice_edges, r.chosen_cost);
                    match (r.trajectory, r.es_cause) {
                        (_, Some(cause)) => sim.enter_stop(cause, &est),
                        (Some(traj), None) => {
                            sim.publish(traj, t);
                            sim.maneuver = r.maneuver;
                            sim.es_cause = None;
                        }
                        (None, None) => sim.maneuver = r.maneuver,
                    }
                    stats
                }
            };
            plans.push(PlanRecord {
                tick,
                t,
                trajectory_id: sim.active.tick_id,
                maneuver: sim.maneuver,
                es_cause: sim.es_cause,
                lattice_nodes: nodes,
                lattice_edges: edges,
                chosen_cost: cost,
                wall_time_ms,
            });
        }

        let (command, fallback) = match controller.step(&sim.active, &est, dt) {
            Ok(out) if out.command.is_finite() => (out.command, false),
            other => {
                if let Err(e) = other {
                    log::warn!("t={t}: controller failed ({e}); braking");
                }
                let brake = ControlCommand {
                    steer_angle: state.steer_angle,
                    longitudinal: Longitudinal::Accel(limits.a_min),
                };
                (brake, true)
            }
        };
        let applied = line.push(command);
        control.push(ControlRecord {
            tick,
            t,
            x: state.pose.x,
            y: state.pose.y,
            heading: state.pose.heading,
            v: state.speed,
            a: state.accel,
            steer: state.steer_angle,
            command,
            applied,
            mode: controller.mode(),
            maneuver: sim.maneuver,
            es_cause: sim.es_cause,
            trajectory_id: sim.active.tick_id,
            cross_track: lateral_error(&sim.active.trajectory, state.pose.position()),
            clearance,
            controller_fallback: fallback,
        });

        if collided {
            outcome = Outcome::Collision;
            break;
        }
        if (state.pose.position() - goal).norm() < sc.goal_radius && state.speed.abs() < 0.1 {
            outcome = Outcome::Completed;
            break;
        }
        if tick == max_tick {
            break;
        }
        state = integrate(&state, &applied, dt, &plant);
    }

    Ok(SimLog {
        scenario: sc.name.clone(),
        seed: sc.seed,
        control_hz: hz,
        plan_hz: sc.rates.plan_hz,
        latency_ticks: lat_ticks,
        goal: [goal.x, goal.y],
        goal_radius: sc.goal_radius,
        safety_margin: sc.planner.safety_margin,
        merge_window: sc.interventions.merge_window,
        reference: world.path.samples().iter().map(|q| [q.x, q.y]).collect(),
        obstacles: world
            .obstacles
            .iter()
            .map(|o| ObstacleTrace {
                id: o.id.clone(),
                polygon: o.polygon_at(0.0).vertices().iter().map(|v| [v.x, v.y]).collect(),
                waypoints: o.predicted().iter().map(|(_, p)| [p.x, p.y]).collect(),
            })
            .collect(),
        control,
        plans,
        outcome,
    })
}
