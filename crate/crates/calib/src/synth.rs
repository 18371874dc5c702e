//! Synthetic wall-corner scenes with known plane geometry.

use nalgebra::{Point3, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};

use crate::types::{PlaneModel, PointCloud3D, RigidTransform3D};

/// Inside corner of two walls and a floor, in the base frame. The walls are
/// `x = corner.x` and `y = corner.y`, the floor is `z = corner.z`; each face
/// is an `extent` by `extent` square touching the corner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CornerScene {
    pub corner: Vector3<f64>,
    pub extent: f64,
    pub points_per_plane: usize,
    pub noise_sigma: f64,
    /// Fraction of points dropped uniformly at random.
    pub occlusion_fraction: f64,
}

impl Default for CornerScene {
    fn default() -> Self {
        Self {
            corner: Vector3::new(3.0, 2.0, -1.0),
            extent: 2.0,
            points_per_plane: 500,
            noise_sigma: 0.0,
            occlusion_fraction: 0.0,
        }
    }
}

impl CornerScene {
    /// Ground-truth planes in the base frame, canonical sign.
    pub fn planes(&self) -> [PlaneModel; 3] {
        let c = self.corner;
        [
            PlaneModel::new(Vector3::x(), c.x, vec![]),
            PlaneModel::new(Vector3::y(), c.y, vec![]),
            PlaneModel::new(Vector3::z(), c.z, vec![]),
        ]
        .map(|p| p.expect("axis-aligned plane"))
    }

    fn sample_base(&self, rng: &mut ChaCha8Rng) -> Vec<Point3<f64>> {
        let (c, e) = (self.corner, self.extent);
        let mut pts = Vec::with_capacity(3 * self.points_per_plane);
        for face in 0..3 {
            for _ in 0..self.points_per_plane {
                let u = rng.random_range(0.0..e);
                let v = rng.random_range(0.0..e);
                let p = match face {
                    0 => Point3::new(c.x, c.y - u, c.z + v),
                    1 => Point3::new(c.x - u, c.y, c.z + v),
                    _ => Point3::new(c.x - u, c.y - v, c.z),
                };
                pts.push(p);
            }
        }
        pts
    }
}

/// Cloud seen by a sensor whose pose maps sensor coordinates into the base
/// frame.
pub fn corner_cloud(scene: &CornerScene, sensor_pose: &RigidTransform3D, id: &str, rng: &mut ChaCha8Rng) -> PointCloud3D {
    let to_sensor = sensor_pose.inverse();
    let noise = Normal::new(0.0, scene.noise_sigma.max(0.0)).expect("finite sigma");
    let mut pts = Vec::new();
    for p in scene.sample_base(rng) {
        if scene.occlusion_fraction > 0.0 && rng.random::<f64>() < scene.occlusion_fraction {
            continue;
        }
        let q = to_sensor.apply(&p);
        pts.push(if scene.noise_sigma > 0.0 {
            Point3::new(q.x + noise.sample(rng), q.y + noise.sample(rng), q.z + noise.sample(rng))
        } else {
            q
        });
    }
    PointCloud3D::new(id, pts).expect("finite synthetic points")
}

/// Two facing walls and a floor: no corner, rank-deficient normals.
pub fn parallel_walls_cloud(scene: &CornerScene, rng: &mut ChaCha8Rng) -> PointCloud3D {
    let (c, e) = (scene.corner, scene.extent);
    let mut pts = Vec::new();
    for face in 0..3 {
        for _ in 0..scene.points_per_plane {
            let u = rng.random_range(0.0..e);
            let v = rng.random_range(0.0..e);
            pts.push(match face {
                0 => Point3::new(c.x, u, c.z + v),
                1 => Point3::new(-c.x, u, c.z + v),
                _ => Point3::new(rng.random_range(-c.x..c.x), u, c.z),
            });
        }
    }
    PointCloud3D::new("parallel", pts).expect("finite points")
}

/// Random rotation up to `max_angle` about a uniform axis, and a translation
/// of length up to `max_translation` in a uniform direction.
pub fn random_transform(rng: &mut ChaCha8Rng, max_angle: f64, max_translation: f64) -> RigidTransform3D {
    let axis: [f64; 3] = UnitSphere.sample(rng);
    let dir: [f64; 3] = UnitSphere.sample(rng);
    let angle = rng.random_range(0.0..=max_angle);
    let dist = rng.random_range(0.0..=max_translation);
    RigidTransform3D::from_axis_angle(Vector3::from(axis) * angle, Vector3::from(dir) * dist)
}

/// Base cloud and a second cloud whose extrinsic (into the base) is `truth`.
pub fn corner_pair(scene: &CornerScene, truth: &RigidTransform3D, rng: &mut ChaCha8Rng) -> (PointCloud3D, PointCloud3D) {
    let a = corner_cloud(scene, &RigidTransform3D::identity(), "base", rng);
    let b = corner_cloud(scene, truth, "aux", rng);
    (a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn points_lie_on_the_ground_truth_planes() {
        let scene = CornerScene::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let truth = random_transform(&mut rng, 0.3, 0.5);
        let cloud = corner_cloud(&scene, &truth, "b", &mut rng);
        assert_eq!(cloud.len(), 1500);
        let planes = scene.planes();
        for p in &cloud.points {
            let base = truth.apply(p);
            let d = planes.iter().map(|pl| pl.distance(&base).abs()).fold(f64::INFINITY, f64::min);
            assert!(d < 1e-12);
        }
    }

    #[test]
    fn occlusion_drops_points() {
        let scene = CornerScene {
            occlusion_fraction: 0.5,
            ..CornerScene::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let n = corner_cloud(&scene, &RigidTransform3D::identity(), "a", &mut rng).len();
        assert!(n > 600 && n < 900, "{n}");
    }
}
