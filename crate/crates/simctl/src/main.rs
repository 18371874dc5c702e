use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hercules_calib::io::{read_cloud, write_calibration, write_xyz};
use hercules_calib::{calibrate_pair, fuse_to_base, IcpParams, PointCloud3D, RansacParams, RigidTransform3D};
use simctl::metrics::{ops_metrics, read_tasks};
use simctl::{export, load_scenario, run_scenario, Outcome, Override, SimError};

#[derive(Parser)]
#[command(name = "simctl", version, about = "Scenario simulator and tools for the delivery-vehicle stack")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write trajectory.csv, metrics.json and path.svg.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Dotted key=value override, e.g. `rates.plan_hz=20`. Repeatable.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<Override>,
    },
    /// Calibrate every LiDAR cloud in a directory against the base sensor.
    Calib {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write all clouds fused into the base frame as .xyz.
        #[arg(long)]
        fused: Option<PathBuf>,
    },
    /// Fleet operations arithmetic from a task table.
    Metrics {
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long)]
        total_km: f64,
        #[arg(long)]
        fleet: u64,
        #[arg(long)]
        contacts: u64,
    },
    /// Parse and validate a scenario without running it.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
}

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_INCOMPLETE: u8 = 3;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SIMCTL_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            scenario,
            seed,
            out,
            overrides,
        } => run(&scenario, seed, &out, overrides),
        Command::Calib { scene, out, fused } => calib(&scene, &out, fused.as_deref()),
        Command::Metrics {
            tasks,
            total_km,
            fleet,
            contacts,
        } => metrics(&tasks, total_km, fleet, contacts),
        Command::Validate { scenario } => validate(&scenario),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { EXIT_VALIDATION } else { EXIT_RUNTIME })
        }
    }
}

fn run(path: &Path, seed: u64, out: &Path, mut overrides: Vec<Override>) -> Result<ExitCode, SimError> {
    overrides.push(Override {
        path: vec!["seed".into()],
        value: seed.into(),
    });
    let scenario = load_scenario(path, &[])?;
    let (log, metrics) = run_scenario(&scenario, &overrides)?;
    export(&log, &metrics, out)?;
    println!(
        "{}: {:?} after {:.2} s, {:.1} m, {} intervention(s), fingerprint {}",
        log.scenario,
        log.outcome,
        metrics.duration,
        metrics.distance,
        metrics.interventions,
        log.fingerprint()
    );
    Ok(if log.outcome == Outcome::Completed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_INCOMPLETE)
    })
}

fn validate(path: &Path) -> Result<ExitCode, SimError> {
    let scenario = load_scenario(path, &[])?;
    let world = scenario.validate()?;
    println!(
        "{}: ok ({} route nodes, {:.1} m reference path, {} obstacles)",
        scenario.name,
        world.route.nodes.len(),
        world.path.length(),
        world.obstacles.len()
    );
    Ok(ExitCode::SUCCESS)
}

fn metrics(tasks: &Path, total_km: f64, fleet: u64, contacts: u64) -> Result<ExitCode, SimError> {
    let records = read_tasks(tasks)?;
    let summary = ops_metrics(&records, total_km, fleet, contacts)?;
    println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
    Ok(ExitCode::SUCCESS)
}

fn load_clouds(scene: &Path) -> Result<Vec<PointCloud3D>, SimError> {
    let entries = fs::read_dir(scene).map_err(|e| SimError::Io {
        path: scene.to_path_buf(),
        source: e,
    })?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| e.eq_ignore_ascii_case("xyz") || e.eq_ignore_ascii_case("pcd"))
        })
        .collect();
    files.sort();
    let clouds = files.iter().map(|p| read_cloud(p)).collect::<Result<Vec<_>, _>>()?;
    if clouds.len() < 2 {
        return Err(SimError::InvalidArgument(format!(
            "{}: need at least two .xyz/.pcd clouds, found {}",
            scene.display(),
            clouds.len()
        )));
    }
    Ok(clouds)
}

/// `out` itself for a single auxiliary sensor, `stem.sensor.ext` otherwise.
fn calib_path(out: &Path, sensor: &str, many: bool) -> PathBuf {
    if !many {
        return out.to_path_buf();
    }
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("calib");
    let name = match out.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}.{sensor}.{ext}"),
        None => format!("{stem}.{sensor}"),
    };
    out.with_file_name(name)
}

fn calib(scene: &Path, out: &Path, fused: Option<&Path>) -> Result<ExitCode, SimError> {
    let mut clouds = load_clouds(scene)?;
    let base_idx = clouds.iter().position(|c| c.sensor_id == "base").unwrap_or(0);
    let base = clouds.remove(base_idx);
    let (ransac, icp) = (RansacParams::default(), IcpParams::default());
    let mut extrinsics = BTreeMap::new();
    extrinsics.insert(base.sensor_id.clone(), RigidTransform3D::identity());
    let many = clouds.len() > 1;
    for cloud in &clouds {
        let pair = calibrate_pair(&base, cloud, &ransac, &icp)?;
        let r = &pair.refined;
        if r.diverged {
            log::warn!("{}: icp diverged; keeping the best iterate", cloud.sensor_id);
        }
        let path = calib_path(out, &cloud.sensor_id, many);
        write_calibration(&path, &r.transform)?;
        println!(
            "{} -> {}: {} icp iterations, rms {:.5} -> {:.5}, written to {}",
            cloud.sensor_id,
            base.sensor_id,
            r.iterations,
            r.initial_rms,
            r.final_rms(),
            path.display()
        );
        extrinsics.insert(cloud.sensor_id.clone(), r.transform);
    }
    if let Some(path) = fused {
        clouds.insert(0, base);
        let cloud = fuse_to_base(&clouds, &extrinsics)?.into_cloud("fused");
        write_xyz(path, &cloud)?;
    }
    Ok(ExitCode::SUCCESS)
}
