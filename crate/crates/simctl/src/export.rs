//! Run artifacts: `trajectory.csv`, `metrics.json` and `path.svg`.
//!
//! Output depends only on the log and metrics, so re-exporting a log gives
//! byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::SimError;
use crate::metrics::{intervention_events, Metrics};
use crate::sim::SimLog;

pub const TRAJECTORY_HEADER: [&str; 9] = ["tick", "t", "x", "y", "heading", "v", "a", "steer", "maneuver"];

pub fn trajectory_csv(log: &SimLog) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRAJECTORY_HEADER).expect("in-memory write");
    for r in &log.control {
        w.write_record([
            r.tick.to_string(),
            r.t.to_string(),
            r.x.to_string(),
            r.y.to_string(),
            r.heading.to_string(),
            r.v.to_string(),
            r.a.to_string(),
            r.steer.to_string(),
            r.maneuver.as_str().to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
}

pub fn metrics_json(metrics: &Metrics) -> String {
    let mut s = serde_json::to_string_pretty(metrics).expect("metrics serialize");
    s.push('\n');
    s
}

fn bounds(log: &SimLog) -> (f64, f64, f64, f64) {
    let mut b = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut add = |x: f64, y: f64| {
        b = (b.0.min(x), b.1.min(y), b.2.max(x), b.3.max(y));
    };
    log.reference.iter().for_each(|p| add(p[0], p[1]));
    log.control.iter().for_each(|r| add(r.x, r.y));
    for o in &log.obstacles {
        o.polygon.iter().chain(&o.waypoints).for_each(|p| add(p[0], p[1]));
    }
    add(log.goal[0], log.goal[1]);
    b
}

fn polyline(points: impl Iterator<Item = (f64, f64)>) -> String {
    let mut s = String::new();
    for (i, (x, y)) in points.enumerate() {
        if i > 0 {
            s.push(' ');
        }
        // SVG's y axis points down
        let _ = write!(s, "{:.3},{:.3}", x, -y);
    }
    s
}

pub fn path_svg(log: &SimLog) -> String {
    let pad = 5.0;
    let (x0, y0, x1, y1) = bounds(log);
    let (w, h) = (x1 - x0 + 2.0 * pad, y1 - y0 + 2.0 * pad);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="{:.3} {:.3} {:.3} {:.3}" width="{:.0}" height="{:.0}">"#,
        x0 - pad,
        -y1 - pad,
        w,
        h,
        (w * 10.0).clamp(200.0, 2000.0),
        (h * 10.0).clamp(200.0, 2000.0),
    );
    let _ = writeln!(s, r#"<rect x="{:.3}" y="{:.3}" width="{w:.3}" height="{h:.3}" fill="white"/>"#, x0 - pad, -y1 - pad);
    let _ = writeln!(
        s,
        r##"<polyline id="reference" points="{}" fill="none" stroke="#9a9a9a" stroke-width="0.6"/>"##,
        polyline(log.reference.iter().map(|p| (p[0], p[1])))
    );
    for o in &log.obstacles {
        let _ = writeln!(
            s,
            r##"<polygon class="obstacle" data-id="{}" points="{}" fill="#d9534f" fill-opacity="0.6"/>"##,
            xml_escape(&o.id),
            polyline(o.polygon.iter().map(|p| (p[0], p[1])))
        );
        if o.waypoints.len() > 1 {
            let _ = writeln!(
                s,
                r##"<polyline class="schedule" points="{}" fill="none" stroke="#d9534f" stroke-width="0.1" stroke-dasharray="0.4 0.3"/>"##,
                polyline(o.waypoints.iter().map(|p| (p[0], p[1])))
            );
        }
    }
    if !log.control.is_empty() {
        let _ = writeln!(
            s,
            r##"<polyline id="driven" points="{}" fill="none" stroke="#1f6fd1" stroke-width="0.15"/>"##,
            polyline(log.control.iter().map(|r| (r.x, r.y)))
        );
    }
    for ev in intervention_events(log) {
        let _ = writeln!(
            s,
            r##"<circle class="intervention" data-cause="{}" cx="{:.3}" cy="{:.3}" r="0.6" fill="none" stroke="#f0ad4e" stroke-width="0.2"/>"##,
            ev.cause.as_str(),
            ev.x,
            -ev.y
        );
    }
    let _ = writeln!(
        s,
        r##"<circle id="goal" cx="{:.3}" cy="{:.3}" r="{:.3}" fill="none" stroke="#2e8b57" stroke-width="0.15"/>"##,
        log.goal[0],
        -log.goal[1],
        log.goal_radius
    );
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn write_file(path: PathBuf, contents: &str) -> Result<PathBuf, SimError> {
    fs::write(&path, contents).map_err(|e| SimError::io(&path, e))?;
    Ok(path)
}

/// Writes the three artifacts into `dir`, creating it if needed.
pub fn export(log: &SimLog, metrics: &Metrics, dir: &Path) -> Result<Vec<PathBuf>, SimError> {
    fs::create_dir_all(dir).map_err(|e| SimError::io(dir, e))?;
    Ok(vec![
        write_file(dir.join("trajectory.csv"), &trajectory_csv(log))?,
        write_file(dir.join("metrics.json"), &metrics_json(metrics))?,
        write_file(dir.join("path.svg"), &path_svg(log))?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::compute_metrics;
    use crate::sim::Outcome;

    fn empty_log() -> SimLog {
        SimLog {
            scenario: "empty".into(),
            seed: 0,
            control_hz: 100,
            plan_hz: 10,
            latency_ticks: 0,
            goal: [10.0, 0.0],
            goal_radius: 1.0,
            safety_margin: 0.3,
            merge_window: 5.0,
            reference: vec![[0.0, 0.0], [10.0, 0.0]],
            obstacles: Vec::new(),
            control: Vec::new(),
            plans: Vec::new(),
            outcome: Outcome::Timeout,
        }
    }

    #[test]
    fn empty_log_exports_headers_only() {
        let log = empty_log();
        assert_eq!(trajectory_csv(&log), format!("{}\n", TRAJECTORY_HEADER.join(",")));
        let svg = path_svg(&log);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert!(!svg.contains("id=\"driven\""));

        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("nested/out");
        let files = export(&log, &compute_metrics(&log), &out).unwrap();
        assert_eq!(files.len(), 3);
        assert!(files.iter().all(|f| f.exists()));
    }

    #[test]
    fn svg_flips_y() {
        let mut log = empty_log();
        log.reference = vec![[0.0, 2.0], [10.0, 2.0]];
        assert!(path_svg(&log).contains("0.000,-2.000 10.000,-2.000"));
    }
}
