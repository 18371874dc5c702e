//! Corner plane extraction, plane correspondence and the closed-form initial
//! extrinsic.

use nalgebra::{Matrix3, Point3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::CalibError;
use crate::types::{PlaneModel, PointCloud3D, RigidTransform3D};

/// Normal Gram determinant below which a corner is rejected.
pub const MIN_GRAM_DET: f64 = 0.1;
/// Best match score (out of 3) below which a correspondence is ambiguous.
pub const MIN_MATCH_SCORE: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacParams {
    pub iters: usize,
    pub inlier_tol: f64,
    pub min_inliers: usize,
    /// Rounds of nearest-plane reassignment and refit after extraction.
    pub refine_rounds: usize,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            iters: 400,
            inlier_tol: 0.03,
            min_inliers: 50,
            refine_rounds: 3,
            seed: 0,
        }
    }
}

/// Least-squares plane through `idx`.
pub fn fit_plane_lsq(points: &[Point3<f64>], idx: &[usize]) -> Result<PlaneModel, CalibError> {
    if idx.len() < 3 {
        return Err(CalibError::InsufficientStructure { found: 0 });
    }
    let n = idx.len() as f64;
    let centroid = idx.iter().fold(Vector3::zeros(), |acc, &i| acc + points[i].coords) / n;
    let mut cov = Matrix3::zeros();
    for &i in idx {
        let d = points[i].coords - centroid;
        cov += d * d.transpose();
    }
    let eig = cov.symmetric_eigen();
    let k = eig.eigenvalues.imin();
    let normal = eig.eigenvectors.column(k).into_owned();
    PlaneModel::new(normal, normal.dot(&centroid), idx.to_vec())
}

fn inliers_of(points: &[Point3<f64>], candidates: &[usize], plane: &PlaneModel, tol: f64) -> Vec<usize> {
    candidates
        .iter()
        .copied()
        .filter(|&i| plane.distance(&points[i]).abs() <= tol)
        .collect()
}

/// Determinant of the Gram matrix of the three plane normals.
pub fn gram_determinant(planes: &[PlaneModel; 3]) -> f64 {
    let n = Matrix3::from_rows(&[
        planes[0].normal.transpose(),
        planes[1].normal.transpose(),
        planes[2].normal.transpose(),
    ]);
    (n * n.transpose()).determinant()
}

/// Sequential RANSAC for the three corner planes, followed by exclusive
/// nearest-plane reassignment and least-squares refits.
pub fn fit_corner_planes(cloud: &PointCloud3D, params: &RansacParams) -> Result<[PlaneModel; 3], CalibError> {
    let pts = &cloud.points;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut remaining: Vec<usize> = (0..pts.len()).collect();
    let mut planes: Vec<PlaneModel> = Vec::with_capacity(3);

    while planes.len() < 3 && remaining.len() >= 3 {
        let mut best: Option<(usize, PlaneModel)> = None;
        for _ in 0..params.iters {
            let pick = rand::seq::index::sample(&mut rng, remaining.len(), 3);
            let (a, b, c) = (pts[remaining[pick.index(0)]], pts[remaining[pick.index(1)]], pts[remaining[pick.index(2)]]);
            let normal = (b - a).cross(&(c - a));
            let Ok(plane) = PlaneModel::new(normal, normal.dot(&a.coords), Vec::new()) else {
                continue;
            };
            let count = remaining
                .iter()
                .filter(|&&i| plane.distance(&pts[i]).abs() <= params.inlier_tol)
                .count();
            if best.as_ref().is_none_or(|(n, _)| count > *n) {
                best = Some((count, plane));
            }
        }
        let Some((count, hypothesis)) = best else { break };
        if count < params.min_inliers {
            break;
        }
        let mut inl = inliers_of(pts, &remaining, &hypothesis, params.inlier_tol);
        let mut plane = fit_plane_lsq(pts, &inl)?;
        inl = inliers_of(pts, &remaining, &plane, params.inlier_tol);
        if inl.len() >= 3 {
            plane = fit_plane_lsq(pts, &inl)?;
        }
        remaining.retain(|i| !plane.inliers.contains(i));
        planes.push(plane);
    }
    if planes.len() < 3 {
        return Err(CalibError::InsufficientStructure { found: planes.len() });
    }

    let all: Vec<usize> = (0..pts.len()).collect();
    for _ in 0..params.refine_rounds {
        let mut groups: [Vec<usize>; 3] = Default::default();
        for &i in &all {
            let (k, dist) = planes
                .iter()
                .enumerate()
                .map(|(k, pl)| (k, pl.distance(&pts[i]).abs()))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("three planes");
            if dist <= params.inlier_tol {
                groups[k].push(i);
            }
        }
        for (k, g) in groups.iter().enumerate() {
            if g.len() >= params.min_inliers.max(3) {
                planes[k] = fit_plane_lsq(pts, g)?;
            }
        }
    }

    let out: [PlaneModel; 3] = [planes[0].clone(), planes[1].clone(), planes[2].clone()];
    let det = gram_determinant(&out);
    if det < MIN_GRAM_DET {
        return Err(CalibError::DegenerateCorner(det));
    }
    Ok(out)
}

/// Correspondence `a[i] <-> signs[i] * b[permutation[i]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneMatch {
    pub permutation: [usize; 3],
    pub signs: [f64; 3],
    pub score: f64,
}

impl PlaneMatch {
    /// Reorders and sign-flips `b` so that entry `i` corresponds to `a[i]`.
    pub fn apply(&self, b: &[PlaneModel; 3]) -> [PlaneModel; 3] {
        std::array::from_fn(|i| {
            let p = &b[self.permutation[i]];
            if self.signs[i] < 0.0 {
                p.flipped()
            } else {
                p.clone()
            }
        })
    }
}

const PERMUTATIONS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

fn normal_matrix(n: [Vector3<f64>; 3]) -> Matrix3<f64> {
    Matrix3::from_rows(&[n[0].transpose(), n[1].transpose(), n[2].transpose()])
}

/// Exhaustive search over permutations and sign patterns.
pub fn match_planes(a: &[PlaneModel; 3], b: &[PlaneModel; 3]) -> Result<PlaneMatch, CalibError> {
    let det_a = normal_matrix([a[0].normal, a[1].normal, a[2].normal]).determinant();
    let mut best: Option<PlaneMatch> = None;
    for perm in PERMUTATIONS {
        let dots: [f64; 3] = std::array::from_fn(|i| a[i].normal.dot(&b[perm[i]].normal));
        let score: f64 = dots.iter().map(|d| d.abs()).sum();
        let mut chosen: Option<([f64; 3], f64)> = None;
        for pattern in 0..8u32 {
            let signs: [f64; 3] = std::array::from_fn(|i| if pattern & (1 << i) != 0 { -1.0 } else { 1.0 });
            let det_b = normal_matrix(std::array::from_fn(|i| b[perm[i]].normal * signs[i])).determinant();
            if det_a * det_b <= 0.0 {
                continue;
            }
            let agreement: f64 = (0..3).map(|i| signs[i] * dots[i]).sum();
            if chosen.is_none_or(|(_, best_agree)| agreement > best_agree) {
                chosen = Some((signs, agreement));
            }
        }
        let Some((signs, _)) = chosen else { continue };
        if best.is_none_or(|m| score > m.score) {
            best = Some(PlaneMatch {
                permutation: perm,
                signs,
                score,
            });
        }
    }
    let best = best.ok_or(CalibError::DegenerateCorner(0.0))?;
    if best.score < MIN_MATCH_SCORE {
        return Err(CalibError::AmbiguousMatch(best.score));
    }
    Ok(best)
}

/// Closed-form transform mapping frame `b` into frame `a` from matched planes.
pub fn kabsch_init(a: &[PlaneModel; 3], b: &[PlaneModel; 3]) -> Result<RigidTransform3D, CalibError> {
    let mut h = Matrix3::zeros();
    for i in 0..3 {
        h += b[i].normal * a[i].normal.transpose();
    }
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    let v = v_t.transpose();
    let fix = (v * u.transpose()).determinant().signum();
    let rotation = v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, fix)) * u.transpose();

    let na = normal_matrix([a[0].normal, a[1].normal, a[2].normal]);
    let det = na.determinant();
    if det.abs() < 1e-6 {
        return Err(CalibError::DegenerateCorner(det * det));
    }
    let rhs = Vector3::new(a[0].offset - b[0].offset, a[1].offset - b[1].offset, a[2].offset - b[2].offset);
    let translation = na
        .lu()
        .solve(&rhs)
        .ok_or(CalibError::DegenerateCorner(det * det))?;
    RigidTransform3D::new(rotation, translation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{corner_cloud, parallel_walls_cloud, random_transform, CornerScene};
    use rand::Rng;

    fn truth_planes() -> [PlaneModel; 3] {
        let s = CornerScene::default();
        s.planes()
    }

    fn angle(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
        a.dot(b).clamp(-1.0, 1.0).acos()
    }

    fn assert_planes_near(found: &[PlaneModel; 3], truth: &[PlaneModel; 3], tol_rad: f64) {
        for t in truth {
            let best = found.iter().map(|f| angle(&f.normal, &t.normal)).fold(f64::INFINITY, f64::min);
            assert!(best < tol_rad, "normal off by {best}");
        }
    }

    #[test]
    fn noiseless_corner_planes_are_exact() {
        let scene = CornerScene::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cloud = corner_cloud(&scene, &RigidTransform3D::identity(), "a", &mut rng);
        let planes = fit_corner_planes(&cloud, &RansacParams::default()).unwrap();
        assert_planes_near(&planes, &truth_planes(), 1e-6);
        for p in &planes {
            assert!(p.offset >= 0.0);
            assert!((p.normal.norm() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn noisy_corner_planes_within_half_degree() {
        let scene = CornerScene {
            noise_sigma: 0.01,
            ..CornerScene::default()
        };
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cloud = corner_cloud(&scene, &RigidTransform3D::identity(), "a", &mut rng);
            let params = RansacParams {
                seed,
                ..RansacParams::default()
            };
            let planes = fit_corner_planes(&cloud, &params).unwrap();
            assert_planes_near(&planes, &truth_planes(), 0.5f64.to_radians());
        }
    }

    #[test]
    fn parallel_walls_are_degenerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cloud = parallel_walls_cloud(&CornerScene::default(), &mut rng);
        let e = fit_corner_planes(&cloud, &RansacParams::default()).unwrap_err();
        assert!(matches!(e, CalibError::DegenerateCorner(_)), "{e:?}");
    }

    #[test]
    fn too_few_planes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = (0..400)
            .map(|_| Point3::new(rng.random_range(0.0..2.0), rng.random_range(0.0..2.0), 1.0))
            .collect();
        let cloud = PointCloud3D::new("flat", pts).unwrap();
        let e = fit_corner_planes(&cloud, &RansacParams::default()).unwrap_err();
        assert!(matches!(e, CalibError::InsufficientStructure { found: 1 }), "{e:?}");
    }

    #[test]
    fn match_identity_and_reversed() {
        let a = truth_planes();
        let m = match_planes(&a, &a).unwrap();
        assert_eq!(m.permutation, [0, 1, 2]);
        assert!((m.score - 3.0).abs() < 1e-12);
        let rev = [a[2].clone(), a[1].clone(), a[0].clone()];
        assert_eq!(match_planes(&a, &rev).unwrap().permutation, [2, 1, 0]);
    }

    fn planes_in_b(a: &[PlaneModel; 3], t_ab: &RigidTransform3D) -> [PlaneModel; 3] {
        // a plane n.p = d in frame a becomes (R'n).q = d - n.t in frame b
        std::array::from_fn(|i| {
            let n = t_ab.rotation.transpose() * a[i].normal;
            PlaneModel::new(n, a[i].offset - a[i].normal.dot(&t_ab.translation), vec![]).unwrap()
        })
    }

    #[test]
    fn match_after_small_rotation() {
        let a = truth_planes();
        let t = RigidTransform3D::from_axis_angle(Vector3::z() * 10f64.to_radians(), Vector3::new(0.2, -0.1, 0.0));
        let b = planes_in_b(&a, &t);
        let shuffled = [b[1].clone(), b[2].clone(), b[0].clone()];
        let m = match_planes(&a, &shuffled).unwrap();
        assert_eq!(m.permutation, [2, 0, 1]);
    }

    #[test]
    fn kabsch_identity_and_exact_recovery() {
        let a = truth_planes();
        let id = kabsch_init(&a, &a).unwrap();
        assert!((id.rotation - Matrix3::identity()).amax() < 1e-12);
        assert!(id.translation.norm() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let truth = random_transform(&mut rng, 0.4, 1.0);
            let b = planes_in_b(&a, &truth);
            let m = match_planes(&a, &b).unwrap();
            let got = kabsch_init(&a, &m.apply(&b)).unwrap();
            assert!((got.rotation - truth.rotation).amax() < 1e-9);
            assert!((got.translation - truth.translation).amax() < 1e-9);
            assert!(got.orthonormality_error() < 1e-9);
            assert!(got.rotation.determinant() > 0.0);
        }
    }

    #[test]
    fn kabsch_on_noisy_fits() {
        let scene = CornerScene {
            noise_sigma: 0.01,
            ..CornerScene::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for seed in 0..5 {
            let truth = random_transform(&mut rng, 0.3, 0.5);
            let ca = corner_cloud(&scene, &RigidTransform3D::identity(), "a", &mut rng);
            let cb = corner_cloud(&scene, &truth, "b", &mut rng);
            let params = RansacParams {
                seed,
                ..RansacParams::default()
            };
            let pa = fit_corner_planes(&ca, &params).unwrap();
            let pb = fit_corner_planes(&cb, &params).unwrap();
            let m = match_planes(&pa, &pb).unwrap();
            let got = kabsch_init(&pa, &m.apply(&pb)).unwrap();
            assert!(got.rotation_angle_to(&truth) < 1f64.to_radians());
            assert!(got.translation_distance_to(&truth) < 0.05);
        }
    }
}
