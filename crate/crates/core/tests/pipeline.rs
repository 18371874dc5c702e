//! Route to command: one local plan around a parked obstacle, tracked in
//! closed loop on an ideal kinematic bicycle.

use hercules_core::control::{Controller, ControllerConfig, Longitudinal};
use hercules_core::frenet::{
    build_lattice, chain_to_path, check_collision, project_to_frenet, score_lattice, search_min_cost, CostWeights,
    LatticeParams, ScoringContext, DEFAULT_CORRIDOR,
};
use hercules_core::motion::{time_parameterize, DynamicLimits};
use hercules_core::routenet::{plan_route, route_to_reference, EdgeSpec, RoadGraph};
use hercules_core::{ConvexPolygon, Footprint, Obstacle, Pose2D, Vec2, VehicleState};

fn segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let u = ((p - a).dot(&ab) / ab.norm_squared().max(1e-12)).clamp(0.0, 1.0);
    (p - (a + ab * u)).norm()
}

#[test]
fn plan_and_track_around_a_parked_car() {
    let mut g = RoadGraph::new();
    g.add_node(1, Vec2::new(0.0, 0.0)).unwrap();
    g.add_node(2, Vec2::new(40.0, 0.0)).unwrap();
    g.add_node(3, Vec2::new(40.0, 30.0)).unwrap();
    g.add_edge(EdgeSpec::new(1, 2).speed_limit(3.0)).unwrap();
    g.add_edge(EdgeSpec::new(2, 3).speed_limit(3.0)).unwrap();
    let route = plan_route(&g, 1, 3).unwrap();
    assert_eq!(route.nodes, vec![1, 2, 3]);
    let path = route_to_reference(&g, &route, 0.5).unwrap();

    let obstacles = [Obstacle::stationary(
        "parked",
        ConvexPolygon::rectangle(2.0, 1.2).unwrap(),
        Pose2D::new(14.0, 0.2, 0.0),
    )];
    let start = Pose2D::new(0.0, 0.0, 0.0);
    let fs = project_to_frenet(&path, &start, 0.0, DEFAULT_CORRIDOR).unwrap();
    let ctx = ScoringContext {
        path: &path,
        obstacles: &obstacles,
        footprint: Footprint::new(2.6, 1.2, 0.4).unwrap(),
        n_circles: 3,
        safety_margin: 0.3,
        v_ref: 3.0,
        preferred_d: 0.0,
        weights: CostWeights::default(),
        plan_time: 0.0,
        ego_s: fs.s,
    };
    let lattice = build_lattice(&fs, &LatticeParams::default(), path.length(), 3.0, 3.0).unwrap();
    let chain = search_min_cost(&score_lattice(&lattice, &ctx).unwrap()).unwrap();
    assert!(chain.iter().all(|c| check_collision(c, &ctx).min_clearance >= 0.3));
    assert!(chain.iter().any(|c| c.end_d.abs() > 0.5), "no swerve around the parked car");

    let limits = DynamicLimits::default();
    let pts = chain_to_path(&path, &chain, 0.5).unwrap();
    let plan = time_parameterize(&pts, &limits, 0.0, 0.0).unwrap();
    let traj = plan.trajectory.points();

    let cfg = ControllerConfig::default();
    let wheelbase = cfg.kinematic.wheelbase;
    let mut controller = Controller::new(cfg).unwrap();
    let mut state = VehicleState::at_rest(start, 0.0);
    let dt = 0.01;
    let mut worst: f64 = 0.0;
    for k in 0..2500 {
        state.timestamp = k as f64 * dt;
        let cmd = controller.step(&plan, &state, dt).unwrap().command;
        assert!(cmd.is_finite());
        let v = match cmd.longitudinal {
            Longitudinal::Speed(v) => v,
            Longitudinal::Accel(a) => (state.speed + a * dt).max(0.0),
        };
        state.steer_angle = cmd.steer_angle;
        state.speed = v;
        let h = state.pose.heading;
        state.pose = Pose2D::new(
            state.pose.x + v * h.cos() * dt,
            state.pose.y + v * h.sin() * dt,
            h + v * cmd.steer_angle.tan() / wheelbase * dt,
        );
        let p = state.pose.position();
        let err = traj
            .windows(2)
            .map(|w| segment_distance(p, w[0].pose.position(), w[1].pose.position()))
            .fold(f64::INFINITY, f64::min);
        worst = worst.max(err);
    }
    assert!(worst < 0.3, "tracking error {worst}");
    let end = traj.last().unwrap().pose;
    assert!(state.pose.distance_to(&end) < 0.5, "stopped {} m from the plan end", state.pose.distance_to(&end));
    assert!(state.speed.abs() < 0.05);
}
