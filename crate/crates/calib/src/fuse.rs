use std::collections::BTreeMap;

use nalgebra::Point3;

use crate::error::CalibError;
use crate::types::{PointCloud3D, RigidTransform3D};

/// Points from several sensors in the base frame; `sources[i]` indexes
/// `sensor_ids` for point `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedCloud {
    pub points: Vec<Point3<f64>>,
    pub sources: Vec<usize>,
    pub sensor_ids: Vec<String>,
}

impl FusedCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn source_of(&self, i: usize) -> &str {
        &self.sensor_ids[self.sources[i]]
    }

    pub fn into_cloud(self, id: impl Into<String>) -> PointCloud3D {
        PointCloud3D {
            sensor_id: id.into(),
            points: self.points,
        }
    }
}

/// Concatenates all clouds after mapping each into the base frame with its
/// extrinsic. Clouds are assumed synchronized.
pub fn fuse_to_base(
    clouds: &[PointCloud3D],
    extrinsics: &BTreeMap<String, RigidTransform3D>,
) -> Result<FusedCloud, CalibError> {
    let total = clouds.iter().map(|c| c.len()).sum();
    let mut out = FusedCloud {
        points: Vec::with_capacity(total),
        sources: Vec::with_capacity(total),
        sensor_ids: Vec::with_capacity(clouds.len()),
    };
    for (k, cloud) in clouds.iter().enumerate() {
        let t = extrinsics
            .get(&cloud.sensor_id)
            .ok_or_else(|| CalibError::MissingCalibration(cloud.sensor_id.clone()))?;
        out.sensor_ids.push(cloud.sensor_id.clone());
        out.points.extend(cloud.points.iter().map(|p| t.apply(p)));
        out.sources.extend(std::iter::repeat_n(k, cloud.len()));
    }
    Ok(out)
}
