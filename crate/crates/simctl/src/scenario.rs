//! Scenario files: schema, overrides, validation and the derived world.
//!
//! A scenario is one JSON document. Unknown fields are rejected so typos
//! surface as errors instead of silently falling back to defaults.

use std::collections::BTreeSet;
use std::path::Path;
use std::str::FromStr;

use hercules_core::behavior::{BehaviorConfig, TrafficSignal};
use hercules_core::control::ControllerConfig;
use hercules_core::frenet::{project_to_frenet, CostWeights, LatticeParams};
use hercules_core::motion::DynamicLimits;
use hercules_core::routenet::{
    add_demonstration, plan_route, route_to_reference, Demonstration, EdgeSpec, NodeId, ReferencePath, RoadClass,
    RoadGraph, Route,
};
use hercules_core::{ConvexPolygon, Footprint, Obstacle, Pose2D, Vec2};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{SimError, ValidationError};
use crate::plant::PlantParams;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    #[serde(default)]
    pub road: RoadSpec,
    #[serde(default)]
    pub demonstrations: Vec<DemoSpec>,
    pub start: PoseSpec,
    pub goal: [f64; 2],
    #[serde(default = "default_goal_radius")]
    pub goal_radius: f64,
    pub vehicle: VehicleSpec,
    #[serde(default)]
    pub obstacles: Vec<ObstacleSpec>,
    #[serde(default)]
    pub signals: Vec<SignalSpec>,
    #[serde(default)]
    pub rates: Rates,
    #[serde(default)]
    pub latency: LatencySpec,
    #[serde(default)]
    pub link: LinkSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_timeout")]
    pub timeout: f64,
    #[serde(default)]
    pub planner: PlannerSpec,
    #[serde(default)]
    pub behavior: BehaviorConfig,
    #[serde(default)]
    pub interventions: InterventionThresholds,
}

fn default_goal_radius() -> f64 {
    1.0
}

fn default_timeout() -> f64 {
    120.0
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoadSpec {
    #[serde(default)]
    pub nodes: Vec<NodeSpec>,
    #[serde(default)]
    pub edges: Vec<EdgeJson>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: NodeId,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeJson {
    pub from: NodeId,
    pub to: NodeId,
    /// Defaults to the length of the edge polyline.
    #[serde(default)]
    pub length: Option<f64>,
    #[serde(default = "default_road_class")]
    pub road_class: RoadClass,
    #[serde(default = "default_lane_width")]
    pub lane_width: f64,
    #[serde(default = "default_speed_limit")]
    pub speed_limit: f64,
    #[serde(default)]
    pub one_way: bool,
    #[serde(default = "default_true")]
    pub overtaking_allowed: bool,
    /// Interior points between the end nodes.
    #[serde(default)]
    pub shape: Vec<[f64; 2]>,
}

fn default_road_class() -> RoadClass {
    RoadClass::UrbanMain
}

fn default_lane_width() -> f64 {
    3.5
}

fn default_speed_limit() -> f64 {
    3.0
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoSpec {
    pub points: Vec<[f64; 2]>,
    #[serde(default = "default_demo_class")]
    pub road_class: RoadClass,
    #[serde(default = "default_demo_lane_width")]
    pub lane_width: f64,
    #[serde(default = "default_speed_limit")]
    pub speed_limit: f64,
    #[serde(default = "default_snap_radius")]
    pub snap_radius: f64,
    #[serde(default)]
    pub one_way: bool,
}

fn default_demo_class() -> RoadClass {
    RoadClass::Unstructured
}

fn default_demo_lane_width() -> f64 {
    3.0
}

fn default_snap_radius() -> f64 {
    2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseSpec {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub heading: f64,
}

impl PoseSpec {
    pub fn pose(&self) -> Pose2D {
        Pose2D::new(self.x, self.y, self.heading)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleSpec {
    /// No default: the ego geometry must be stated by every scenario.
    pub footprint: Footprint,
    #[serde(default)]
    pub limits: DynamicLimits,
    #[serde(default)]
    pub controller: ControllerConfig,
    #[serde(default = "default_steer_tau")]
    pub steer_tau: f64,
    #[serde(default = "default_speed_tau")]
    pub speed_tau: f64,
}

fn default_steer_tau() -> f64 {
    0.1
}

fn default_speed_tau() -> f64 {
    0.3
}

impl VehicleSpec {
    pub fn plant(&self) -> PlantParams {
        PlantParams {
            wheelbase: self.controller.kinematic.wheelbase,
            steer_limit: self.controller.kinematic.steer_limit,
            steer_tau: self.steer_tau,
            speed_tau: self.speed_tau,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleSpec {
    pub id: String,
    /// Body-frame convex polygon, counter-clockwise.
    #[serde(default)]
    pub polygon: Option<Vec<[f64; 2]>>,
    /// `[length, width]` rectangle centred on the pose; alternative to `polygon`.
    #[serde(default)]
    pub size: Option<[f64; 2]>,
    /// Waypoints in simulated time; one entry makes the obstacle static.
    pub schedule: Vec<Waypoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalSpec {
    pub x: f64,
    pub y: f64,
    /// `[start, end)` intervals of red, simulated seconds.
    #[serde(default)]
    pub red_windows: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Rates {
    pub control_hz: u32,
    pub plan_hz: u32,
}

impl Default for Rates {
    fn default() -> Self {
        Self {
            control_hz: 100,
            plan_hz: 10,
        }
    }
}

impl Rates {
    pub fn ticks_per_plan(&self) -> u64 {
        u64::from(self.control_hz / self.plan_hz.max(1))
    }

    pub fn dt(&self) -> f64 {
        1.0 / f64::from(self.control_hz)
    }
}

/// Actuation latency: a fixed value, or a `[low, high]` range drawn once per
/// run from the seeded generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LatencySpec {
    Fixed(f64),
    Range([f64; 2]),
}

impl Default for LatencySpec {
    fn default() -> Self {
        LatencySpec::Fixed(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkSpec {
    /// `[start, end)` windows during which the remote link is down.
    pub dropouts: Vec<[f64; 2]>,
}

impl LinkSpec {
    pub fn is_down(&self, t: f64) -> bool {
        self.dropouts.iter().any(|w| t >= w[0] && t < w[1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerSpec {
    pub lattice: LatticeParams,
    pub weights: CostWeights,
    pub safety_margin: f64,
    pub n_circles: usize,
    pub corridor_half_width: f64,
    /// Sample spacing of the route reference path, m.
    pub path_spacing: f64,
    /// Sample spacing of published trajectories, m.
    pub trajectory_spacing: f64,
    /// Maximum distance from the reference path at which projection is attempted.
    pub projection_corridor: f64,
    /// Half-width of the band around the reference line in which an obstacle
    /// ahead counts as the lead.
    pub lead_half_width: f64,
    /// Free length required in the adjacent lane beyond the lead before overtaking.
    pub overtake_clearance: f64,
    /// Distance the rear bumper must clear a passed obstacle before the
    /// overtake may end.
    pub overtake_return_gap: f64,
    /// Constant-velocity prediction horizon for moving obstacles, s.
    pub prediction_horizon: f64,
    /// Standard deviation of the position noise added to obstacle snapshots, m.
    pub obstacle_noise_sigma: f64,
    /// Deceleration used for planned stops when it suffices; the vehicle's
    /// braking limit is the fallback.
    pub comfort_decel: f64,
    /// A new plan starts from the previous plan's state at the current time
    /// when the measured speed is within `stitch_tolerance` of it and the
    /// measured position within `stitch_distance`.
    pub stitch_tolerance: f64,
    pub stitch_distance: f64,
    /// Distance short of a red signal's stop line at which the front bumper stops.
    pub stop_line_margin: f64,
}

impl Default for PlannerSpec {
    fn default() -> Self {
        Self {
            lattice: LatticeParams::default(),
            weights: CostWeights::default(),
            safety_margin: 0.3,
            n_circles: 3,
            corridor_half_width: 2.5,
            path_spacing: 0.5,
            trajectory_spacing: 0.5,
            projection_corridor: 10.0,
            lead_half_width: 1.0,
            overtake_clearance: 10.0,
            overtake_return_gap: 2.0,
            prediction_horizon: 8.0,
            obstacle_noise_sigma: 0.0,
            comfort_decel: 1.0,
            stitch_tolerance: 0.5,
            stitch_distance: 0.5,
            stop_line_margin: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InterventionThresholds {
    /// Emergency-stop entries closer together than this count once, s.
    pub merge_window: f64,
}

impl Default for InterventionThresholds {
    fn default() -> Self {
        Self { merge_window: 5.0 }
    }
}

/// `key.path=value` assignment applied to the scenario document before it is
/// deserialized. The value is read as JSON, or as a plain string if it is
/// not valid JSON.
#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub path: Vec<String>,
    pub value: Value,
}

impl FromStr for Override {
    type Err = SimError;

    fn from_str(text: &str) -> Result<Self, SimError> {
        let bad = |msg: &str| SimError::Override {
            text: text.to_string(),
            msg: msg.to_string(),
        };
        let (key, raw) = text.split_once('=').ok_or_else(|| bad("expected key=value"))?;
        let path: Vec<String> = key.trim().split('.').map(str::to_string).collect();
        if path.iter().any(|p| p.is_empty()) {
            return Err(bad("empty path segment"));
        }
        let raw = raw.trim();
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        Ok(Override { path, value })
    }
}

/// Applies overrides in order, creating missing object keys.
pub fn apply_overrides(doc: &mut Value, overrides: &[Override]) -> Result<(), SimError> {
    for ov in overrides {
        let text = format!("{}={}", ov.path.join("."), ov.value);
        let mut cur = &mut *doc;
        for seg in &ov.path {
            if cur.is_null() {
                *cur = Value::Object(Default::default());
            }
            cur = match cur {
                Value::Object(map) => map.entry(seg.clone()).or_insert(Value::Null),
                Value::Array(items) => {
                    let len = items.len();
                    let i: usize = seg.parse().map_err(|_| SimError::Override {
                        text: text.clone(),
                        msg: format!("`{seg}` indexes an array"),
                    })?;
                    items.get_mut(i).ok_or_else(|| SimError::Override {
                        text: text.clone(),
                        msg: format!("index {i} out of range (length {len})"),
                    })?
                }
                _ => {
                    return Err(SimError::Override {
                        text: text.clone(),
                        msg: format!("cannot descend into a scalar at `{seg}`"),
                    })
                }
            };
        }
        *cur = ov.value.clone();
    }
    Ok(())
}

/// Deserializes a scenario value, reporting the path of the offending field.
pub fn from_value(doc: Value) -> Result<Scenario, SimError> {
    serde_path_to_error::deserialize(doc).map_err(|e| SimError::Parse {
        path: e.path().to_string(),
        msg: e.inner().to_string(),
    })
}

pub fn parse_scenario(text: &str, overrides: &[Override]) -> Result<Scenario, SimError> {
    let mut doc: Value = serde_json::from_str(text).map_err(|e| SimError::Parse {
        path: format!("line {} column {}", e.line(), e.column()),
        msg: e.to_string(),
    })?;
    apply_overrides(&mut doc, overrides)?;
    from_value(doc)
}

pub fn load_scenario(path: &Path, overrides: &[Override]) -> Result<Scenario, SimError> {
    let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
    parse_scenario(&text, overrides)
}

impl Scenario {
    pub fn with_overrides(&self, overrides: &[Override]) -> Result<Scenario, SimError> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut doc = serde_json::to_value(self).expect("scenario serializes");
        apply_overrides(&mut doc, overrides)?;
        from_value(doc)
    }

    /// Runs every check and builds the world; all failures are reported together.
    pub fn validate(&self) -> Result<World, ValidationError> {
        World::build(self)
    }
}

/// Everything the simulator derives from a scenario before the first tick.
#[derive(Debug, Clone)]
pub struct World {
    pub graph: RoadGraph,
    pub route: Route,
    pub path: ReferencePath,
    pub obstacles: Vec<Obstacle>,
    pub signals: Vec<TrafficSignal>,
    pub start: Pose2D,
    pub goal: Vec2,
}

fn pt(p: &[f64; 2]) -> Vec2 {
    Vec2::new(p[0], p[1])
}

fn check_windows(err: &mut ValidationError, prefix: &str, windows: &[[f64; 2]]) {
    for (i, w) in windows.iter().enumerate() {
        if !(w[0].is_finite() && w[1].is_finite() && w[0] >= 0.0 && w[0] < w[1]) {
            err.push(format!("{prefix}[{i}]"), "window must satisfy 0 <= start < end");
        }
    }
}

impl World {
    pub fn build(sc: &Scenario) -> Result<World, ValidationError> {
        let mut err = ValidationError::default();
        if sc.schema_version != SCHEMA_VERSION {
            err.push(
                "schema_version",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", sc.schema_version),
            );
        }
        if !(sc.goal_radius > 0.0) {
            err.push("goal_radius", "must be positive");
        }
        if !(sc.timeout > 0.0 && sc.timeout.is_finite()) {
            err.push("timeout", "must be positive and finite");
        }
        let r = sc.rates;
        if r.control_hz == 0 {
            err.push("rates.control_hz", "must be positive");
        }
        if r.plan_hz == 0 {
            err.push("rates.plan_hz", "must be positive");
        }
        if r.plan_hz > 0 && r.control_hz > 0 {
            if r.control_hz < r.plan_hz {
                err.push("rates.control_hz", "must be at least plan_hz");
            } else if r.control_hz % r.plan_hz != 0 {
                err.push("rates.plan_hz", "must divide control_hz");
            }
        }
        match sc.latency {
            LatencySpec::Fixed(l) if !(l >= 0.0 && l.is_finite()) => err.push("latency", "must be >= 0"),
            LatencySpec::Range([lo, hi]) if !(lo >= 0.0 && lo <= hi && hi.is_finite()) => {
                err.push("latency", "range must satisfy 0 <= low <= high")
            }
            _ => {}
        }
        check_windows(&mut err, "link.dropouts", &sc.link.dropouts);

        let v = &sc.vehicle;
        if let Err(e) = v.footprint.validate() {
            err.push("vehicle.footprint", e.to_string());
        }
        if let Err(e) = v.limits.validate() {
            err.push("vehicle.limits", e.to_string());
        }
        if let Err(e) = v.controller.validate() {
            err.push("vehicle.controller", e.to_string());
        }
        if !(v.steer_tau >= 0.0) {
            err.push("vehicle.steer_tau", "must be >= 0");
        }
        if !(v.speed_tau >= 0.0) {
            err.push("vehicle.speed_tau", "must be >= 0");
        }

        let p = &sc.planner;
        if p.n_circles == 0 {
            err.push("planner.n_circles", "must be at least 1");
        }
        for (name, value) in [
            ("path_spacing", p.path_spacing),
            ("trajectory_spacing", p.trajectory_spacing),
            ("corridor_half_width", p.corridor_half_width),
            ("projection_corridor", p.projection_corridor),
            ("lead_half_width", p.lead_half_width),
            ("prediction_horizon", p.prediction_horizon),
            ("lattice.horizon_s", p.lattice.horizon_s),
            ("comfort_decel", p.comfort_decel),
            ("stitch_tolerance", p.stitch_tolerance),
            ("stitch_distance", p.stitch_distance),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                err.push(format!("planner.{name}"), "must be positive");
            }
        }
        for (name, value) in [
            ("safety_margin", p.safety_margin),
            ("overtake_clearance", p.overtake_clearance),
            ("overtake_return_gap", p.overtake_return_gap),
            ("obstacle_noise_sigma", p.obstacle_noise_sigma),
            ("stop_line_margin", p.stop_line_margin),
        ] {
            if !(value >= 0.0 && value.is_finite()) {
                err.push(format!("planner.{name}"), "must be >= 0");
            }
        }
        if p.lattice.n_layers == 0 {
            err.push("planner.lattice.n_layers", "must be at least 1");
        }
        if p.lattice.offsets.is_empty() {
            err.push("planner.lattice.offsets", "must not be empty");
        }
        if p.lattice.speed_factors.is_empty() || p.lattice.speed_factors.iter().any(|f| !(*f > 0.0)) {
            err.push("planner.lattice.speed_factors", "must be non-empty and positive");
        }
        let b = &sc.behavior;
        for (name, value) in [
            ("t_follow", b.t_follow),
            ("hold_time", b.hold_time),
            ("decel", b.decel),
            ("headway_speed_floor", b.headway_speed_floor),
        ] {
            if !(value > 0.0) {
                err.push(format!("behavior.{name}"), "must be positive");
            }
        }
        if !(sc.interventions.merge_window >= 0.0) {
            err.push("interventions.merge_window", "must be >= 0");
        }

        // Obstacles.
        let mut obstacles = Vec::new();
        let mut ids = BTreeSet::new();
        for (i, o) in sc.obstacles.iter().enumerate() {
            let at = format!("obstacles[{i}]");
            if !ids.insert(o.id.clone()) {
                err.push(format!("{at}.id"), format!("duplicate id {:?}", o.id));
            }
            let footprint = match (&o.polygon, &o.size) {
                (Some(poly), None) => ConvexPolygon::new(poly.iter().map(pt).collect())
                    .map_err(|e| err.push(format!("{at}.polygon"), e.to_string()))
                    .ok(),
                (None, Some([l, w])) => ConvexPolygon::rectangle(*l, *w)
                    .map_err(|e| err.push(format!("{at}.size"), e.to_string()))
                    .ok(),
                _ => {
                    err.push(at.clone(), "give exactly one of `polygon` and `size`");
                    None
                }
            };
            if o.schedule.is_empty() {
                err.push(format!("{at}.schedule"), "needs at least one waypoint");
                continue;
            }
            let predicted: Vec<(f64, Pose2D)> =
                o.schedule.iter().map(|w| (w.t, Pose2D::new(w.x, w.y, w.heading))).collect();
            let Some(footprint) = footprint else { continue };
            match Obstacle::new(o.id.clone(), footprint, predicted) {
                Ok(ob) => obstacles.push(ob),
                Err(e) => err.push(format!("{at}.schedule"), e.to_string()),
            }
        }

        // Road graph.
        let mut graph = RoadGraph::new();
        for (i, n) in sc.road.nodes.iter().enumerate() {
            if let Err(e) = graph.add_node(n.id, Vec2::new(n.x, n.y)) {
                err.push(format!("road.nodes[{i}]"), e.to_string());
            }
        }
        for (i, e) in sc.road.edges.iter().enumerate() {
            let spec = EdgeSpec {
                from: e.from,
                to: e.to,
                length: e.length,
                road_class: e.road_class,
                lane_width: e.lane_width,
                speed_limit: e.speed_limit,
                one_way: e.one_way,
                overtaking_allowed: e.overtaking_allowed,
                shape: e.shape.iter().map(pt).collect(),
            };
            if let Err(x) = graph.add_edge(spec) {
                err.push(format!("road.edges[{i}]"), x.to_string());
            }
        }
        for (i, d) in sc.demonstrations.iter().enumerate() {
            let demo = Demonstration {
                road_class: d.road_class,
                snap_radius: d.snap_radius,
                lane_width: d.lane_width,
                speed_limit: d.speed_limit,
                one_way: d.one_way,
            };
            let pts: Vec<Vec2> = d.points.iter().map(pt).collect();
            match add_demonstration(graph.clone(), &pts, &demo) {
                Ok(g) => graph = g,
                Err(e) => err.push(format!("demonstrations[{i}]"), e.to_string()),
            }
        }
        if !err.issues.is_empty() {
            return Err(err);
        }
        if graph.node_count() == 0 {
            err.push("road", "no nodes: give road.nodes or demonstrations");
            return Err(err);
        }

        // Route and reference path.
        let start = sc.start.pose();
        let goal = pt(&sc.goal);
        let from = graph.nearest_node_within(start.position(), f64::INFINITY).expect("graph has nodes");
        let to = graph.nearest_node_within(goal, f64::INFINITY).expect("graph has nodes");
        let route = match plan_route(&graph, from, to) {
            Ok(r) if r.legs.is_empty() => {
                err.push("goal", "start and goal snap to the same road node");
                return Err(err);
            }
            Ok(r) => r,
            Err(e) => {
                err.push("goal", e.to_string());
                return Err(err);
            }
        };
        let path = match route_to_reference(&graph, &route, p.path_spacing) {
            Ok(path) => path,
            Err(e) => {
                err.push("road", format!("route cannot be sampled: {e}"));
                return Err(err);
            }
        };
        let end = path.samples().last().expect("path has samples").position();
        if (end - goal).norm() > sc.goal_radius {
            err.push("goal", format!("route ends {:.2} m from the goal, beyond goal_radius", (end - goal).norm()));
        }

        let mut signals = Vec::new();
        for (i, s) in sc.signals.iter().enumerate() {
            let at = format!("signals[{i}]");
            check_windows(&mut err, &format!("{at}.red_windows"), &s.red_windows);
            match project_to_frenet(&path, &Pose2D::new(s.x, s.y, 0.0), 0.0, p.projection_corridor) {
                Ok(fs) => signals.push(TrafficSignal {
                    s: fs.s,
                    red_windows: s.red_windows.iter().map(|w| (w[0], w[1])).collect(),
                }),
                Err(e) => err.push(at, format!("not on the route: {e}")),
            }
        }
        err.into_result()?;
        Ok(World {
            graph,
            route,
            path,
            obstacles,
            signals,
            start,
            goal,
        })
    }
}
