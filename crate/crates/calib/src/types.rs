use nalgebra::{Matrix3, Point3, Rotation3, Vector3};

use crate::error::CalibError;

/// Minimum point count for a cloud used in calibration.
pub const MIN_CALIB_POINTS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud3D {
    pub sensor_id: String,
    pub points: Vec<Point3<f64>>,
}

impl PointCloud3D {
    pub fn new(sensor_id: impl Into<String>, points: Vec<Point3<f64>>) -> Result<Self, CalibError> {
        if let Some(i) = points.iter().position(|p| !p.coords.iter().all(|c| c.is_finite())) {
            return Err(CalibError::InvalidCloud(format!("point {i} is not finite")));
        }
        Ok(Self {
            sensor_id: sensor_id.into(),
            points,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn require_calibration_size(&self) -> Result<(), CalibError> {
        if self.points.len() < MIN_CALIB_POINTS {
            return Err(CalibError::InvalidCloud(format!(
                "{} has {} points, need at least {MIN_CALIB_POINTS}",
                self.sensor_id,
                self.points.len()
            )));
        }
        Ok(())
    }

    pub fn transformed(&self, t: &RigidTransform3D) -> PointCloud3D {
        PointCloud3D {
            sensor_id: self.sensor_id.clone(),
            points: self.points.iter().map(|p| t.apply(p)).collect(),
        }
    }
}

/// Plane `normal . p = offset` with unit normal and `offset >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneModel {
    pub normal: Vector3<f64>,
    pub offset: f64,
    pub inliers: Vec<usize>,
}

impl PlaneModel {
    /// Normalizes and flips the normal so that the offset is non-negative.
    pub fn new(normal: Vector3<f64>, offset: f64, inliers: Vec<usize>) -> Result<Self, CalibError> {
        let norm = normal.norm();
        if !(norm > 1e-12) || !offset.is_finite() {
            return Err(CalibError::InvalidCloud("plane normal is degenerate".into()));
        }
        let (mut n, mut d) = (normal / norm, offset / norm);
        if d < 0.0 {
            n = -n;
            d = -d;
        }
        Ok(Self {
            normal: n,
            offset: d,
            inliers,
        })
    }

    pub fn distance(&self, p: &Point3<f64>) -> f64 {
        self.normal.dot(&p.coords) - self.offset
    }

    pub fn flipped(&self) -> PlaneModel {
        PlaneModel {
            normal: -self.normal,
            offset: -self.offset,
            inliers: self.inliers.clone(),
        }
    }
}

/// Proper rigid motion `p -> R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform3D {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RigidTransform3D {
    pub const ORTHO_TOL: f64 = 1e-9;

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, CalibError> {
        let t = Self { rotation, translation };
        t.check()?;
        Ok(t)
    }

    pub fn from_axis_angle(scaled_axis: Vector3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: *Rotation3::from_scaled_axis(scaled_axis).matrix(),
            translation,
        }
    }

    pub fn orthonormality_error(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Matrix3::identity()).amax()
    }

    pub fn check(&self) -> Result<(), CalibError> {
        if !self.translation.iter().all(|v| v.is_finite()) || !self.rotation.iter().all(|v| v.is_finite()) {
            return Err(CalibError::InvalidTransform("non-finite entries".into()));
        }
        let err = self.orthonormality_error();
        if err >= Self::ORTHO_TOL {
            return Err(CalibError::InvalidTransform(format!("rotation not orthonormal ({err:.3e})")));
        }
        if self.rotation.determinant() <= 0.0 {
            return Err(CalibError::InvalidTransform("rotation has negative determinant".into()));
        }
        Ok(())
    }

    pub fn apply(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// `self` after `other`.
    pub fn compose(&self, other: &RigidTransform3D) -> RigidTransform3D {
        RigidTransform3D {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform3D {
        let rt = self.rotation.transpose();
        RigidTransform3D {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Angle of the relative rotation, radians.
    pub fn rotation_angle_to(&self, other: &RigidTransform3D) -> f64 {
        let rel = self.rotation.transpose() * other.rotation;
        // atan2 form stays accurate near zero, where acos of the trace does not
        let axis = Vector3::new(rel[(2, 1)] - rel[(1, 2)], rel[(0, 2)] - rel[(2, 0)], rel[(1, 0)] - rel[(0, 1)]);
        (0.5 * axis.norm()).atan2(0.5 * (rel.trace() - 1.0))
    }

    pub fn translation_distance_to(&self, other: &RigidTransform3D) -> f64 {
        (self.translation - other.translation).norm()
    }

    /// Row-major 3x4 `[R | t]`.
    pub fn to_row_major(&self) -> [f64; 12] {
        let mut out = [0.0; 12];
        for r in 0..3 {
            for c in 0..3 {
                out[r * 4 + c] = self.rotation[(r, c)];
            }
            out[r * 4 + 3] = self.translation[r];
        }
        out
    }

    pub fn from_row_major(v: &[f64; 12]) -> Result<Self, CalibError> {
        let rotation = Matrix3::new(v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10]);
        Self::new(rotation, Vector3::new(v[3], v[7], v[11]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn plane_sign_is_canonical() {
        let p = PlaneModel::new(Vector3::new(0.0, 0.0, -2.0), -4.0, vec![]).unwrap();
        assert_eq!(p.normal, Vector3::new(0.0, 0.0, 1.0));
        assert_eq!(p.offset, 2.0);
        assert!((p.normal.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_finite_points_and_bad_rotations() {
        assert!(PointCloud3D::new("a", vec![Point3::new(0.0, f64::NAN, 0.0)]).is_err());
        let reflect = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(RigidTransform3D::new(reflect, Vector3::zeros()).is_err());
        assert!(RigidTransform3D::new(Matrix3::identity() * 1.01, Vector3::zeros()).is_err());
    }

    proptest! {
        #[test]
        fn compose_with_inverse_is_identity(
            ax in -1.0f64..1.0, ay in -1.0f64..1.0, az in -1.0f64..1.0,
            tx in -5.0f64..5.0, ty in -5.0f64..5.0, tz in -5.0f64..5.0,
        ) {
            let t = RigidTransform3D::from_axis_angle(Vector3::new(ax, ay, az), Vector3::new(tx, ty, tz));
            prop_assert!(t.check().is_ok());
            let id = t.compose(&t.inverse());
            prop_assert!((id.rotation - Matrix3::identity()).amax() < 1e-12);
            prop_assert!(id.translation.norm() < 1e-12);
            let back = RigidTransform3D::from_row_major(&t.to_row_major()).unwrap();
            prop_assert_eq!(back, t);
        }
    }
}
