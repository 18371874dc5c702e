use std::path::PathBuf;

use hercules_core::behavior::ManeuverKind;
use simctl::metrics::intervention_events;
use simctl::{load_scenario, run_scenario, EsCause, Metrics, Outcome, Override, SimLog};

fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(format!("../../scenarios/{name}.json"))
}

fn run_with(name: &str, overrides: &[Override]) -> (SimLog, Metrics) {
    let sc = load_scenario(&scenario_path(name), &[]).unwrap();
    run_scenario(&sc, overrides).unwrap()
}

fn run(name: &str) -> (SimLog, Metrics) {
    run_with(name, &[])
}

fn set(path: &str, value: serde_json::Value) -> Override {
    Override {
        path: path.split('.').map(String::from).collect(),
        value,
    }
}

/// Distance from the rear axle to the front bumper of the scenario footprint.
const FRONT: f64 = 2.2;

#[test]
fn wall_forces_a_stop_short_of_it() {
    let (log, m) = run("wall");
    assert_eq!(log.outcome, Outcome::Timeout);
    assert!(m.interventions >= 1);
    let ev = &intervention_events(&log)[0];
    assert!(matches!(ev.cause, EsCause::Clearance | EsCause::NoFeasiblePath));
    let last = log.control.last().unwrap();
    assert!(last.v.abs() < 1e-3);
    // the wall face is at x = 29.75
    assert!(last.x + FRONT < 29.75 - log.safety_margin, "stopped at {}", last.x);
    assert!(m.min_clearance.unwrap() > 0.0);
}

#[test]
fn dropout_counts_one_intervention_and_resumes() {
    let (log, m) = run("dropout");
    assert_eq!(log.outcome, Outcome::Completed);
    assert_eq!(m.interventions, 1);
    let ev = &intervention_events(&log)[0];
    assert_eq!(ev.cause, EsCause::Dropout);
    assert!((ev.t - 5.0).abs() < 1e-9);
    // moving again after the window closes
    assert!(log.control.iter().any(|r| r.t > 7.0 && r.v > 1.0));
}

#[test]
fn overtake_passes_the_cart_with_margin() {
    let (log, m) = run("overtake");
    assert_eq!(log.outcome, Outcome::Completed);
    assert!(log.control.iter().any(|r| r.maneuver == ManeuverKind::Overtake));
    assert!(m.min_clearance.unwrap() >= log.safety_margin);
    assert_eq!(m.interventions, 0);
}

#[test]
fn red_signal_holds_the_vehicle_before_the_line() {
    let (log, m) = run("signal");
    assert_eq!(log.outcome, Outcome::Completed);
    for r in log.control.iter().filter(|r| r.t < 18.0) {
        assert!(r.x + FRONT < 40.0, "front at {} during red (t = {})", r.x + FRONT, r.t);
    }
    assert!(log.control.iter().any(|r| r.t < 18.0 && r.t > 10.0 && r.v.abs() < 1e-3));
    assert!(m.duration > 18.0);
}

#[test]
fn desk_course_is_collision_free() {
    let (log, m) = run("desk");
    assert_eq!(log.outcome, Outcome::Completed);
    assert_eq!(log.obstacles.len(), 10);
    assert!(m.min_clearance.unwrap() >= log.safety_margin);
    assert_eq!(m.interventions, 0);
}

#[test]
fn plan_rate_override_changes_tick_spacing() {
    let (log, _) = run_with("straight", &[set("rates.plan_hz", 20.into())]);
    assert_eq!(log.plan_hz, 20);
    assert!(log.plans.windows(2).all(|w| w[1].tick - w[0].tick == 5));
}

#[test]
fn latency_range_is_drawn_from_the_seed() {
    let range = set("latency", serde_json::json!([0.03, 0.06]));
    for seed in 0..4u64 {
        let (log, _) = run_with("latency", &[range.clone(), set("seed", seed.into())]);
        assert!((3..=6).contains(&log.latency_ticks), "{}", log.latency_ticks);
        let k = log.latency_ticks;
        for i in k..log.control.len() {
            assert_eq!(log.control[i].applied, log.control[i - k].command);
        }
    }
}

#[test]
fn same_seed_same_fingerprint() {
    let (a, _) = run("circle");
    let (b, _) = run("circle");
    assert_eq!(a.fingerprint(), b.fingerprint());
}
