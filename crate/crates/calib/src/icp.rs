//! Point-to-plane ICP with local-plane gating.

use std::num::NonZero;

use kiddo::{ImmutableKdTree, SquaredEuclidean};
use nalgebra::{Matrix3, Matrix6, Point3, Vector3, Vector6};

use crate::error::CalibError;
use crate::types::{PointCloud3D, RigidTransform3D};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcpParams {
    pub max_iters: usize,
    /// Stop when the parameter update norm falls below this.
    pub tol: f64,
    /// Upper bound on sampled source points.
    pub max_points: usize,
    /// Neighbours used for local normals.
    pub k_normals: usize,
    pub max_correspondence: f64,
    /// Minimum |cos| between the two local normals of a correspondence.
    pub min_normal_agreement: f64,
    /// A neighbourhood counts as planar when its smallest-to-middle
    /// eigenvalue ratio is at most this multiple of the cloud's median ratio.
    pub planarity_factor: f64,
    /// Relative RMS change under which the iteration counts as converged.
    pub rms_rel_tol: f64,
}

impl Default for IcpParams {
    fn default() -> Self {
        Self {
            max_iters: 30,
            tol: 1e-7,
            max_points: 1500,
            k_normals: 10,
            max_correspondence: 0.5,
            min_normal_agreement: 0.9,
            planarity_factor: 3.0,
            rms_rel_tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    pub transform: RigidTransform3D,
    pub iterations: usize,
    pub initial_rms: f64,
    /// Point-to-plane RMS of the initial guess and every accepted iterate.
    pub rms_history: Vec<f64>,
    pub converged: bool,
    pub diverged: bool,
}

impl IcpResult {
    pub fn final_rms(&self) -> f64 {
        *self.rms_history.last().expect("history starts with the initial rms")
    }
}

struct Surface {
    tree: ImmutableKdTree<f64, 3>,
    points: Vec<Point3<f64>>,
    normals: Vec<Option<Vector3<f64>>>,
}

impl Surface {
    fn new(points: &[Point3<f64>], params: &IcpParams) -> Result<Self, CalibError> {
        let entries: Vec<[f64; 3]> = points.iter().map(|p| [p.x, p.y, p.z]).collect();
        let tree = ImmutableKdTree::new_from_slice(&entries)
            .map_err(|e| CalibError::InvalidCloud(format!("kd-tree construction failed: {e:?}")))?;
        let k = NonZero::new(params.k_normals.max(3)).expect("k >= 3");
        let local: Vec<Option<(Vector3<f64>, f64)>> = entries
            .iter()
            .map(|q| {
                let nn = tree.query(q).nearest_n::<SquaredEuclidean<f64>>(k).execute();
                local_normal(points, nn.iter().map(|r| r.item as usize))
            })
            .collect();
        let mut ratios: Vec<f64> = local.iter().flatten().map(|(_, r)| *r).collect();
        ratios.sort_by(f64::total_cmp);
        let median = ratios.get(ratios.len() / 2).copied().unwrap_or(0.0);
        let limit = (median * params.planarity_factor).max(1e-12);
        let normals = local
            .into_iter()
            .map(|l| l.and_then(|(n, r)| (r <= limit).then_some(n)))
            .collect();
        Ok(Self {
            tree,
            points: points.to_vec(),
            normals,
        })
    }

    fn nearest(&self, p: &Point3<f64>) -> (usize, f64) {
        let r = self.tree.query(&[p.x, p.y, p.z]).nearest_one::<SquaredEuclidean<f64>>().execute();
        (r.item as usize, r.distance)
    }
}

/// Normal and smallest-to-middle eigenvalue ratio of a neighbourhood.
fn local_normal(points: &[Point3<f64>], idx: impl Iterator<Item = usize>) -> Option<(Vector3<f64>, f64)> {
    let nb: Vec<Vector3<f64>> = idx.map(|i| points[i].coords).collect();
    if nb.len() < 3 {
        return None;
    }
    let c = nb.iter().sum::<Vector3<f64>>() / nb.len() as f64;
    let cov = nb.iter().fold(Matrix3::zeros(), |acc, p| acc + (p - c) * (p - c).transpose());
    let eig = cov.symmetric_eigen();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let (l0, l1) = (eig.eigenvalues[order[0]], eig.eigenvalues[order[1]]);
    if !(l1 > 0.0) {
        return None;
    }
    Some((eig.eigenvectors.column(order[0]).into_owned(), l0.max(0.0) / l1))
}

struct Pair {
    p: Vector3<f64>,
    n: Vector3<f64>,
    r: f64,
}

fn correspondences(
    target: &Surface,
    src: &[(Point3<f64>, Vector3<f64>)],
    t: &RigidTransform3D,
    params: &IcpParams,
) -> Vec<Pair> {
    let max_d2 = params.max_correspondence * params.max_correspondence;
    src.iter()
        .filter_map(|(p, nb)| {
            let pt = t.apply(p);
            let (qi, d2) = target.nearest(&pt);
            if d2 > max_d2 {
                return None;
            }
            let n = target.normals[qi]?;
            if n.dot(&t.rotate(nb)).abs() < params.min_normal_agreement {
                return None;
            }
            let r = n.dot(&(pt - target.points[qi]));
            Some(Pair { p: pt.coords, n, r })
        })
        .collect()
}

fn rms(pairs: &[Pair]) -> f64 {
    if pairs.is_empty() {
        return f64::INFINITY;
    }
    (pairs.iter().map(|c| c.r * c.r).sum::<f64>() / pairs.len() as f64).sqrt()
}

/// Refines `init`, the transform taking `cloud_b` into the frame of
/// `cloud_a`. The returned RMS never exceeds that of `init`.
pub fn icp_refine(
    cloud_a: &PointCloud3D,
    cloud_b: &PointCloud3D,
    init: &RigidTransform3D,
    params: &IcpParams,
) -> Result<IcpResult, CalibError> {
    init.check()?;
    if cloud_a.len() < params.k_normals.max(3) || cloud_b.len() < params.k_normals.max(3) {
        return Err(CalibError::InvalidCloud("clouds too small for icp".into()));
    }
    let target = Surface::new(&cloud_a.points, params)?;
    let source_surface = Surface::new(&cloud_b.points, params)?;
    let stride = cloud_b.len().div_ceil(params.max_points.max(1));
    let src: Vec<(Point3<f64>, Vector3<f64>)> = (0..cloud_b.len())
        .step_by(stride)
        .filter_map(|i| source_surface.normals[i].map(|n| (cloud_b.points[i], n)))
        .collect();

    let mut current = *init;
    let mut pairs = correspondences(&target, &src, &current, params);
    if pairs.len() < 6 {
        return Err(CalibError::InvalidCloud(format!("only {} correspondences at the initial guess", pairs.len())));
    }
    let initial_rms = rms(&pairs);
    let mut result = IcpResult {
        transform: current,
        iterations: 0,
        initial_rms,
        rms_history: vec![initial_rms],
        converged: false,
        diverged: false,
    };
    let mut stalled = 0;
    while result.iterations < params.max_iters {
        result.iterations += 1;
        let mut ata = Matrix6::zeros();
        let mut atb = Vector6::zeros();
        for c in &pairs {
            let j = Vector6::from_iterator(c.p.cross(&c.n).iter().copied().chain(c.n.iter().copied()));
            ata += j * j.transpose();
            atb -= j * c.r;
        }
        let Some(x) = ata.cholesky().map(|ch| ch.solve(&atb)) else {
            break;
        };
        let step = RigidTransform3D::from_axis_angle(Vector3::new(x[0], x[1], x[2]), Vector3::new(x[3], x[4], x[5]));
        current = step.compose(&current);
        pairs = correspondences(&target, &src, &current, params);
        let e = rms(&pairs);
        let best = result.final_rms();
        if pairs.len() >= 6 && e < best {
            result.transform = current;
            result.rms_history.push(e);
            stalled = 0;
            if (best - e) <= params.rms_rel_tol * best {
                result.converged = true;
                break;
            }
        } else if pairs.len() >= 6 && e - best <= params.rms_rel_tol * best {
            // plateau at the noise floor
            result.converged = true;
            break;
        } else {
            stalled += 1;
        }
        if x.norm() < params.tol {
            result.converged = true;
            break;
        }
        if stalled >= 3 {
            result.diverged = true;
            return Err(CalibError::Diverged(Box::new(result)));
        }
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{corner_pair, random_transform, CornerScene};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dense() -> CornerScene {
        CornerScene {
            points_per_plane: 800,
            ..CornerScene::default()
        }
    }

    #[test]
    fn ground_truth_is_a_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let truth = random_transform(&mut rng, 0.2, 0.4);
        let (a, b) = corner_pair(&dense(), &truth, &mut rng);
        let params = IcpParams::default();
        let r = icp_refine(&a, &b, &truth, &params).unwrap();
        assert!(r.iterations <= 2, "{}", r.iterations);
        assert!((r.transform.rotation - truth.rotation).amax() < params.tol);
        assert!((r.transform.translation - truth.translation).amax() < params.tol);
    }

    #[test]
    fn recovers_from_perturbed_start() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let scene = CornerScene {
            noise_sigma: 0.01,
            ..dense()
        };
        let truth = random_transform(&mut rng, 0.2, 0.4);
        let (a, b) = corner_pair(&scene, &truth, &mut rng);
        let off = RigidTransform3D::from_axis_angle(Vector3::new(0.0, 0.6, 0.8) * 2f64.to_radians(), Vector3::new(0.03, -0.04, 0.0));
        let init = off.compose(&truth);
        let r = icp_refine(&a, &b, &init, &IcpParams::default()).unwrap();
        assert!(r.transform.rotation_angle_to(&truth) < 0.5f64.to_radians());
        assert!(r.transform.translation_distance_to(&truth) < 0.02);
        for w in r.rms_history.windows(2) {
            assert!(w[1] < w[0]);
        }
        assert!(r.final_rms() <= r.initial_rms);
        assert!(r.transform.orthonormality_error() < 1e-9);
    }
}
