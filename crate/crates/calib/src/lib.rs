//! Multi-LiDAR extrinsic calibration from a wall-corner scene, and fusion of
//! calibrated clouds into the base frame.

pub mod error;
pub mod fuse;
pub mod icp;
pub mod io;
pub mod planes;
pub mod synth;
pub mod types;

pub use error::CalibError;
pub use fuse::{fuse_to_base, FusedCloud};
pub use icp::{icp_refine, IcpParams, IcpResult};
pub use planes::{fit_corner_planes, kabsch_init, match_planes, PlaneMatch, RansacParams};
pub use types::{PlaneModel, PointCloud3D, RigidTransform3D};

/// Result of calibrating one sensor against the base sensor.
#[derive(Debug, Clone)]
pub struct PairCalibration {
    pub initial: RigidTransform3D,
    pub refined: IcpResult,
}

/// Full pipeline: fit planes in both clouds, match them, initialize with
/// Kabsch and refine with ICP. The result maps `other` into `base`.
pub fn calibrate_pair(
    base: &PointCloud3D,
    other: &PointCloud3D,
    ransac: &RansacParams,
    icp: &IcpParams,
) -> Result<PairCalibration, CalibError> {
    let planes_a = fit_corner_planes(base, ransac)?;
    let planes_b = fit_corner_planes(other, ransac)?;
    let m = match_planes(&planes_a, &planes_b)?;
    let initial = kabsch_init(&planes_a, &m.apply(&planes_b))?;
    let refined = match icp_refine(base, other, &initial, icp) {
        Ok(r) => r,
        // best iterate is kept; `diverged` stays set for the caller
        Err(CalibError::Diverged(best)) => *best,
        Err(e) => return Err(e),
    };
    Ok(PairCalibration { initial, refined })
}
