//! Run metrics from a simulation log, and fleet operations arithmetic.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::sim::{EsCause, Outcome, SimLog};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub completed: bool,
    pub outcome: Outcome,
    pub cross_track_rms: f64,
    pub cross_track_max: f64,
    /// `None` when the scenario has no obstacles.
    pub min_clearance: Option<f64>,
    pub interventions: usize,
    pub avg_speed: f64,
    pub distance: f64,
    pub duration: f64,
    pub final_goal_distance: f64,
    /// 95th percentile of planning wall time, ms.
    pub plan_cycle_p95: f64,
}

/// One counted emergency stop.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InterventionEvent {
    pub tick: u64,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub cause: EsCause,
    /// Later triggers folded into this one by the merge window.
    pub merged: usize,
}

/// Entries into an emergency stop. A trigger within `merge_window` seconds of
/// the previous trigger belongs to the same event.
pub fn intervention_events(log: &SimLog) -> Vec<InterventionEvent> {
    let mut events: Vec<InterventionEvent> = Vec::new();
    let mut last_trigger = f64::NEG_INFINITY;
    let mut prev: Option<EsCause> = None;
    for r in &log.control {
        if let (Some(cause), None) = (r.es_cause, prev) {
            match events.last_mut() {
                Some(ev) if r.t - last_trigger <= log.merge_window => ev.merged += 1,
                _ => events.push(InterventionEvent {
                    tick: r.tick,
                    t: r.t,
                    x: r.x,
                    y: r.y,
                    cause,
                    merged: 0,
                }),
            }
            last_trigger = r.t;
        }
        prev = r.es_cause;
    }
    events
}

pub fn count_interventions(log: &SimLog) -> usize {
    intervention_events(log).len()
}

/// Nearest-rank percentile, `q` in (0, 1]. Zero for an empty sample.
pub fn percentile_nearest_rank(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = (q * v.len() as f64).ceil().max(1.0) as usize;
    v[rank.min(v.len()) - 1]
}

pub fn compute_metrics(log: &SimLog) -> Metrics {
    let recs = &log.control;
    let n = recs.len().max(1) as f64;
    let cross_track_rms = (recs.iter().map(|r| r.cross_track * r.cross_track).sum::<f64>() / n).sqrt();
    let cross_track_max = recs.iter().map(|r| r.cross_track).fold(0.0, f64::max);
    let min_clearance = recs.iter().filter_map(|r| r.clearance).reduce(f64::min).map(|c| c.max(0.0));
    let distance: f64 = recs.windows(2).map(|w| (w[1].x - w[0].x).hypot(w[1].y - w[0].y)).sum();
    let duration = match (recs.first(), recs.last()) {
        (Some(a), Some(b)) => b.t - a.t,
        _ => 0.0,
    };
    let final_goal_distance = recs.last().map_or(0.0, |r| (r.x - log.goal[0]).hypot(r.y - log.goal[1]));
    let walls: Vec<f64> = log.plans.iter().map(|p| p.wall_time_ms).collect();
    Metrics {
        completed: log.outcome == Outcome::Completed,
        outcome: log.outcome,
        cross_track_rms,
        cross_track_max,
        min_clearance,
        interventions: count_interventions(log),
        avg_speed: if duration > 0.0 { distance / duration } else { 0.0 },
        distance,
        duration,
        final_goal_distance,
        plan_cycle_p95: percentile_nearest_rank(&walls, 0.95),
    }
}

/// One row of the deployment task table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub city: String,
    pub task: String,
    pub distance_km: f64,
    pub duration_min: f64,
    pub payload_kg: Option<f64>,
}

pub fn read_tasks(path: &Path) -> Result<Vec<TaskRecord>, SimError> {
    let csv_err = |e: csv::Error| SimError::Csv {
        path: path.to_path_buf(),
        msg: e.to_string(),
    };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(csv_err)?;
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<TaskRecord>().enumerate() {
        let rec = row.map_err(csv_err)?;
        if !(rec.distance_km > 0.0 && rec.distance_km.is_finite()) {
            return Err(SimError::Csv {
                path: path.to_path_buf(),
                msg: format!("row {}: distance_km must be positive", i + 1),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpsSummary {
    /// Mean task distance rounded to 0.1 km.
    pub avg_task_km: f64,
    pub tasks_per_vehicle: u64,
    pub contacts_per_vehicle: u64,
    pub fleet_contacts: u64,
}

/// Tasks a vehicle completes over `total_km`, and the contacts avoided.
pub fn ops_metrics(tasks: &[TaskRecord], total_km: f64, fleet: u64, contacts_per_task: u64) -> Result<OpsSummary, SimError> {
    if tasks.is_empty() {
        return Err(SimError::InvalidArgument("no task records".into()));
    }
    if !(total_km > 0.0 && total_km.is_finite()) {
        return Err(SimError::InvalidArgument(format!("total distance must be positive, got {total_km}")));
    }
    if fleet == 0 || contacts_per_task == 0 {
        return Err(SimError::InvalidArgument("fleet size and contacts per task must be positive".into()));
    }
    let mean = tasks.iter().map(|t| t.distance_km).sum::<f64>() / tasks.len() as f64;
    let avg_task_km = (mean * 10.0).round() / 10.0;
    if avg_task_km <= 0.0 {
        return Err(SimError::InvalidArgument("average task distance rounds to zero".into()));
    }
    let tasks_per_vehicle = (total_km / avg_task_km).round() as u64;
    let contacts_per_vehicle = contacts_per_task * tasks_per_vehicle;
    Ok(OpsSummary {
        avg_task_km,
        tasks_per_vehicle,
        contacts_per_vehicle,
        fleet_contacts: fleet * contacts_per_vehicle,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::ControlRecord;
    use hercules_core::behavior::ManeuverKind;
    use hercules_core::control::{ControlCommand, ControlMode, Longitudinal};
    use proptest::prelude::*;

    fn task(km: f64) -> TaskRecord {
        TaskRecord {
            city: "c".into(),
            task: "t".into(),
            distance_km: km,
            duration_min: 10.0,
            payload_kg: None,
        }
    }

    fn record(tick: u64, x: f64, es: Option<EsCause>, cross: f64) -> ControlRecord {
        let cmd = ControlCommand {
            steer_angle: 0.0,
            longitudinal: Longitudinal::Speed(1.0),
        };
        ControlRecord {
            tick,
            t: tick as f64 * 0.1,
            x,
            y: 0.0,
            heading: 0.0,
            v: 1.0,
            a: 0.0,
            steer: 0.0,
            command: cmd,
            applied: cmd,
            mode: ControlMode::Kinematic,
            maneuver: if es.is_some() { ManeuverKind::EmergencyStop } else { ManeuverKind::LaneKeep },
            es_cause: es,
            trajectory_id: 0,
            cross_track: cross,
            clearance: None,
            controller_fallback: false,
        }
    }

    fn log(control: Vec<ControlRecord>) -> SimLog {
        SimLog {
            scenario: "t".into(),
            seed: 0,
            control_hz: 10,
            plan_hz: 10,
            latency_ticks: 0,
            goal: [10.0, 0.0],
            goal_radius: 1.0,
            safety_margin: 0.3,
            merge_window: 5.0,
            reference: vec![],
            obstacles: vec![],
            control,
            plans: vec![],
            outcome: Outcome::Timeout,
        }
    }

    #[test]
    fn deployment_table_figures() {
        let kms = [9.6, 5.4, 1.2, 0.6, 1.6, 4.0];
        let tasks: Vec<TaskRecord> = kms.iter().map(|&k| task(k)).collect();
        let s = ops_metrics(&tasks, 2500.0, 25, 4).unwrap();
        assert_eq!(s.avg_task_km, 3.7);
        assert_eq!(s.tasks_per_vehicle, 676);
        assert_eq!(s.contacts_per_vehicle, 2704);
        assert_eq!(s.fleet_contacts, 67_600);
        let one = ops_metrics(&[task(5.0)], 5.0, 1, 1).unwrap();
        assert_eq!((one.avg_task_km, one.tasks_per_vehicle, one.fleet_contacts), (5.0, 1, 1));
        let two = ops_metrics(&[task(1.0), task(2.0)], 3.0, 1, 1).unwrap();
        assert_eq!((two.avg_task_km, two.tasks_per_vehicle), (1.5, 2));
    }

    #[test]
    fn rejects_degenerate_inputs() {
        assert!(ops_metrics(&[], 100.0, 1, 1).is_err());
        assert!(ops_metrics(&[task(1.0)], 0.0, 1, 1).is_err());
        assert!(ops_metrics(&[task(0.01)], 10.0, 1, 1).is_err());
        assert!(ops_metrics(&[task(1.0)], 10.0, 0, 1).is_err());
    }

    #[test]
    fn nearest_rank() {
        let v: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(percentile_nearest_rank(&v, 0.95), 19.0);
        assert_eq!(percentile_nearest_rank(&v, 1.0), 20.0);
        assert_eq!(percentile_nearest_rank(&[3.0], 0.95), 3.0);
        assert_eq!(percentile_nearest_rank(&[], 0.95), 0.0);
    }

    #[test]
    fn triggers_inside_the_window_merge() {
        let es = Some(EsCause::Clearance);
        // entries at t = 1.0, 3.0 (merged) and 9.0
        let mut recs = Vec::new();
        for k in 0..100u64 {
            let on = matches!(k, 10..=12 | 30..=31 | 90..=95);
            recs.push(record(k, k as f64 * 0.1, if on { es } else { None }, 0.0));
        }
        let l = log(recs);
        let ev = intervention_events(&l);
        assert_eq!(ev.len(), 2);
        assert_eq!(ev[0].merged, 1);
        assert_eq!(ev[0].tick, 10);
        assert_eq!(ev[1].tick, 90);
    }

    #[test]
    fn path_metrics() {
        let recs = vec![record(0, 0.0, None, 0.0), record(1, 3.0, None, 0.3), record(2, 4.0, None, 0.4)];
        let m = compute_metrics(&log(recs));
        assert!((m.distance - 4.0).abs() < 1e-12);
        assert!((m.duration - 0.2).abs() < 1e-12);
        assert!((m.cross_track_max - 0.4).abs() < 1e-12);
        assert!((m.cross_track_rms - (0.25f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(m.min_clearance, None);
        assert!(!m.completed);
        assert!((m.final_goal_distance - 6.0).abs() < 1e-12);
    }

    #[test]
    fn empty_log_is_all_zero() {
        let m = compute_metrics(&log(vec![]));
        assert_eq!((m.distance, m.avg_speed, m.cross_track_rms, m.interventions), (0.0, 0.0, 0.0, 0));
    }

    proptest! {
        #[test]
        fn merged_count_never_exceeds_entries(mask in proptest::collection::vec(any::<bool>(), 1..200)) {
            let recs: Vec<ControlRecord> = mask
                .iter()
                .enumerate()
                .map(|(k, &on)| record(k as u64, 0.0, on.then_some(EsCause::Dropout), 0.0))
                .collect();
            let entries = mask.windows(2).filter(|w| !w[0] && w[1]).count() + usize::from(mask[0]);
            let n = count_interventions(&log(recs));
            prop_assert!(n <= entries);
            prop_assert_eq!(n == 0, entries == 0);
        }
    }
}
