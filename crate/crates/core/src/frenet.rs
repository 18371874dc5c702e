//! Local path planning in the Frenet frame of the reference path.
//!
//! Candidate lateral profiles are quintics in arc length connecting lattice
//! nodes `(station, offset, target speed)`. Each edge is scored and the
//! layered DAG is searched by dynamic programming for the cheapest chain.

use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::geom::{footprint_circles, wrap_angle, ConvexPolygon, Footprint, Obstacle, Pose2D, Vec2};
use crate::motion::PathPoint;
use crate::routenet::{menger_curvature, ReferencePath};

pub const DEFAULT_CORRIDOR: f64 = 10.0;
/// Curve sampling step used by both the obstacle cost and the collision check.
pub const COLLISION_STEP: f64 = 0.25;
const SIMPSON_INTERVALS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FrenetState {
    pub s: f64,
    pub d: f64,
    pub d_prime: f64,
    pub d_pprime: f64,
    pub speed: f64,
}

/// Projects a Cartesian pose onto the reference path.
///
/// The path is piecewise linear in position with heading interpolated along
/// each sample interval; the foot point is the root of the tangential
/// component of `pose - path(s)`, found by bisection in the intervals
/// around the nearest sample.
pub fn project_to_frenet(
    path: &ReferencePath,
    pose: &Pose2D,
    speed: f64,
    corridor: f64,
) -> Result<FrenetState, CoreError> {
    let p = pose.position();
    let samples = path.samples();
    let nearest = samples
        .iter()
        .enumerate()
        .map(|(i, q)| ((q.position() - p).norm_squared(), i))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, i)| i)
        .expect("reference path has samples");

    let last_seg = samples.len() - 2;
    let lo = nearest.saturating_sub(2);
    let hi = (nearest + 1).min(last_seg);
    let mut best: Option<(f64, f64, f64)> = None; // (|d|, s, d)
    for i in lo..=hi {
        if let Some(u) = foot_in_segment(path, i, p) {
            let (pos, heading, _) = path.eval_in_segment(i, u);
            let d = (p - pos).dot(&left_normal(heading));
            let s = samples[i].s + u * (samples[i + 1].s - samples[i].s);
            if best.map_or(true, |b| d.abs() < b.0) {
                best = Some((d.abs(), s, d));
            }
        }
    }
    let (s, d, heading) = match best {
        Some((_, s, d)) => (s, d, path.eval(s).1),
        None => {
            // Beyond either end: clamp to the closer end point.
            let (s, i, u) = if nearest == 0 {
                (0.0, 0, 0.0)
            } else {
                (path.length(), last_seg, 1.0)
            };
            let (pos, heading, _) = path.eval_in_segment(i, u);
            (s, (p - pos).dot(&left_normal(heading)), heading)
        }
    };
    let (pos, _, _) = path.eval(s);
    let distance = (p - pos).norm();
    if distance > corridor {
        return Err(CoreError::OffPath { distance, corridor });
    }
    let dtheta = wrap_angle(pose.heading - heading);
    Ok(FrenetState {
        s,
        d,
        d_prime: dtheta.tan(),
        d_pprime: 0.0,
        speed,
    })
}

fn left_normal(heading: f64) -> Vec2 {
    Vec2::new(-heading.sin(), heading.cos())
}

/// Root in `[0, 1]` of the tangential offset on sample interval `i`.
fn foot_in_segment(path: &ReferencePath, i: usize, p: Vec2) -> Option<f64> {
    let f = |u: f64| {
        let (pos, heading, _) = path.eval_in_segment(i, u);
        (p - pos).dot(&Vec2::new(heading.cos(), heading.sin()))
    };
    let (mut a, mut b) = (0.0f64, 1.0f64);
    let (mut fa, fb) = (f(a), f(b));
    if fa == 0.0 {
        return Some(0.0);
    }
    if fb == 0.0 {
        return Some(1.0);
    }
    if fa.signum() == fb.signum() {
        return None;
    }
    for _ in 0..64 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return Some(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Some(0.5 * (a + b))
}

/// Inverse of [`project_to_frenet`].
pub fn frenet_to_cartesian(path: &ReferencePath, fs: &FrenetState) -> Result<Pose2D, CoreError> {
    let len = path.length();
    if !(fs.s >= 0.0 && fs.s <= len) {
        return Err(CoreError::OutOfBounds(format!("s = {} outside path [0, {len}]", fs.s)));
    }
    let (pos, heading, kappa) = path.eval(fs.s);
    let fold = fs.d * kappa;
    if fold.abs() >= 1.0 {
        return Err(CoreError::SingularProjection(fold));
    }
    let p = pos + left_normal(heading) * fs.d;
    Ok(Pose2D::new(p.x, p.y, heading + fs.d_prime.atan()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LatticeParams {
    pub horizon_s: f64,
    pub n_layers: usize,
    pub offsets: Vec<f64>,
    /// Target speeds as fractions of the reference speed.
    pub speed_factors: Vec<f64>,
}

impl Default for LatticeParams {
    fn default() -> Self {
        Self {
            horizon_s: 25.0,
            n_layers: 5,
            offsets: vec![-2.0, -1.0, 0.0, 1.0, 2.0],
            speed_factors: vec![0.5, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    pub start: FrenetState,
    pub stations: Vec<f64>,
    pub offsets: Vec<f64>,
    pub speeds: Vec<f64>,
}

impl Lattice {
    pub fn nodes_per_layer(&self) -> usize {
        self.offsets.len() * self.speeds.len()
    }

    pub fn node_count(&self) -> usize {
        self.stations.len() * self.nodes_per_layer()
    }

    /// Start fans out to layer 1, then every node connects to every node of
    /// the next layer.
    pub fn edge_count(&self) -> usize {
        let n = self.nodes_per_layer();
        if self.stations.is_empty() {
            0
        } else {
            n + (self.stations.len() - 1) * n * n
        }
    }

    /// `(offset, speed)` of node `j` within a layer.
    pub fn node(&self, j: usize) -> (f64, f64) {
        let ns = self.speeds.len();
        (self.offsets[j / ns], self.speeds[j % ns])
    }
}

/// Samples lattice stations ahead of `fs`, truncating at the path end.
pub fn build_lattice(
    fs: &FrenetState,
    params: &LatticeParams,
    path_length: f64,
    corridor_half_width: f64,
    v_ref: f64,
) -> Result<Lattice, CoreError> {
    if !(params.horizon_s > 0.0) || params.n_layers == 0 {
        return Err(CoreError::InvalidArgument(
            "lattice needs a positive horizon and at least one layer".into(),
        ));
    }
    if !(fs.s < path_length) {
        return Err(CoreError::OutOfBounds(format!(
            "start s = {} is at or beyond the path end {path_length}",
            fs.s
        )));
    }
    let step = params.horizon_s / params.n_layers as f64;
    let mut stations: Vec<f64> = Vec::with_capacity(params.n_layers);
    for k in 1..=params.n_layers {
        let s = (fs.s + k as f64 * step).min(path_length);
        if stations.last().map_or(true, |&prev| s > prev) {
            stations.push(s);
        }
    }
    let offsets: Vec<f64> = params
        .offsets
        .iter()
        .copied()
        .filter(|o| o.abs() < corridor_half_width)
        .collect();
    if offsets.is_empty() {
        return Err(CoreError::InvalidArgument(format!(
            "no lattice offsets fit inside corridor half-width {corridor_half_width}"
        )));
    }
    let speeds: Vec<f64> = params.speed_factors.iter().map(|f| f * v_ref).collect();
    if speeds.is_empty() {
        return Err(CoreError::InvalidArgument("lattice needs at least one speed".into()));
    }
    Ok(Lattice {
        start: *fs,
        stations,
        offsets,
        speeds,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CostTerms {
    pub smoothness: f64,
    pub end_offset: f64,
    pub obstacle: f64,
    pub speed_dev: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateCurve {
    pub start: FrenetState,
    pub end_s: f64,
    pub end_d: f64,
    pub target_speed: f64,
    /// `d(σ) = Σ c_i σ^i` with `σ = s - start.s`.
    pub coeffs: [f64; 6],
    pub costs: CostTerms,
}

impl CandidateCurve {
    pub fn span(&self) -> f64 {
        self.end_s - self.start.s
    }

    pub fn d(&self, sigma: f64) -> f64 {
        let c = &self.coeffs;
        c[0] + sigma * (c[1] + sigma * (c[2] + sigma * (c[3] + sigma * (c[4] + sigma * c[5]))))
    }

    pub fn d1(&self, sigma: f64) -> f64 {
        let c = &self.coeffs;
        c[1] + sigma * (2.0 * c[2] + sigma * (3.0 * c[3] + sigma * (4.0 * c[4] + sigma * 5.0 * c[5])))
    }

    pub fn d2(&self, sigma: f64) -> f64 {
        let c = &self.coeffs;
        2.0 * c[2] + sigma * (6.0 * c[3] + sigma * (12.0 * c[4] + sigma * 20.0 * c[5]))
    }

    pub fn state_at(&self, sigma: f64) -> FrenetState {
        FrenetState {
            s: self.start.s + sigma,
            d: self.d(sigma),
            d_prime: self.d1(sigma),
            d_pprime: self.d2(sigma),
            speed: self.target_speed,
        }
    }

    /// Sample positions along σ no further apart than `step`, both ends included.
    pub fn sigma_samples(&self, step: f64) -> impl Iterator<Item = f64> {
        let span = self.span();
        let n = (span / step).ceil().max(1.0) as usize;
        (0..=n).map(move |i| if i == n { span } else { span * i as f64 / n as f64 })
    }
}

/// Quintic lateral profile from `start` to `(end_s, end_d)` with zero end
/// slope and curvature.
pub fn connect(start: &FrenetState, end_s: f64, end_d: f64, target_speed: f64) -> Result<CandidateCurve, CoreError> {
    let t = end_s - start.s;
    if !(t > 0.0) {
        return Err(CoreError::InvalidArgument(format!(
            "end_s {end_s} must exceed start s {}",
            start.s
        )));
    }
    let (c0, c1, c2) = (start.d, start.d_prime, 0.5 * start.d_pprime);
    let r0 = end_d - (c0 + c1 * t + c2 * t * t);
    let r1 = -(c1 + 2.0 * c2 * t);
    let r2 = -2.0 * c2;
    let (t2, t3) = (t * t, t * t * t);
    let c3 = (10.0 * r0 - 4.0 * r1 * t + 0.5 * r2 * t2) / t3;
    let c4 = (-15.0 * r0 + 7.0 * r1 * t - r2 * t2) / (t3 * t);
    let c5 = (6.0 * r0 - 3.0 * r1 * t + 0.5 * r2 * t2) / (t3 * t2);
    Ok(CandidateCurve {
        start: *start,
        end_s,
        end_d,
        target_speed,
        coeffs: [c0, c1, c2, c3, c4, c5],
        costs: CostTerms::default(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostWeights {
    pub smoothness: f64,
    pub end_offset: f64,
    pub obstacle: f64,
    pub speed_dev: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            smoothness: 10.0,
            end_offset: 1.0,
            obstacle: 1.0,
            speed_dev: 0.5,
        }
    }
}

/// Everything the edge scorer needs besides the curve itself.
#[derive(Debug, Clone)]
pub struct ScoringContext<'a> {
    pub path: &'a ReferencePath,
    pub obstacles: &'a [Obstacle],
    pub footprint: Footprint,
    pub n_circles: usize,
    pub safety_margin: f64,
    pub v_ref: f64,
    /// Lateral offset the end-offset term pulls toward (non-zero while overtaking).
    pub preferred_d: f64,
    pub weights: CostWeights,
    /// Simulated time of the planning tick and the ego station at that time,
    /// used to look up obstacle predictions along the curve.
    pub plan_time: f64,
    pub ego_s: f64,
}

impl ScoringContext<'_> {
    fn time_at(&self, s: f64, speed: f64) -> f64 {
        self.plan_time + (s - self.ego_s).max(0.0) / speed.max(0.1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionReport {
    pub feasible: bool,
    pub min_clearance: f64,
}

/// Per-sample clearances of a curve: footprint circles against obstacle
/// polygons at their predicted time. `None` if the curve leaves the path domain.
fn sample_clearances(curve: &CandidateCurve, ctx: &ScoringContext) -> Option<Vec<f64>> {
    let mut out = Vec::new();
    let mut polys: Vec<ConvexPolygon> = Vec::with_capacity(ctx.obstacles.len());
    for sigma in curve.sigma_samples(COLLISION_STEP) {
        let fs = curve.state_at(sigma);
        let pose = frenet_to_cartesian(ctx.path, &fs).ok()?;
        if ctx.obstacles.is_empty() {
            continue;
        }
        let t = ctx.time_at(fs.s, curve.target_speed);
        polys.clear();
        polys.extend(ctx.obstacles.iter().map(|o| o.polygon_at(t)));
        let circles = footprint_circles(&ctx.footprint, &pose, ctx.n_circles).ok()?;
        let clearance = circles
            .iter()
            .flat_map(|c| polys.iter().map(move |p| p.signed_distance(c.center) - c.radius))
            .fold(f64::MAX, f64::min);
        out.push(clearance);
    }
    Some(out)
}

/// Cost terms of one candidate. An infinite total marks it infeasible.
pub fn score(curve: &CandidateCurve, ctx: &ScoringContext) -> CostTerms {
    let span = curve.span();
    let h = span / SIMPSON_INTERVALS as f64;
    let mut acc = 0.0;
    for i in 0..=SIMPSON_INTERVALS {
        let w = if i == 0 || i == SIMPSON_INTERVALS {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += w * curve.d2(i as f64 * h).powi(2);
    }
    let smoothness = acc * h / 3.0;
    let end_offset = (curve.end_d - ctx.preferred_d).abs();
    let speed_dev = (curve.target_speed - ctx.v_ref).abs();
    let obstacle = match sample_clearances(curve, ctx) {
        None => f64::INFINITY,
        Some(cs) => {
            let mut sum = 0.0;
            for c in cs {
                if c < ctx.safety_margin {
                    sum = f64::INFINITY;
                    break;
                }
                sum += 1.0 / (c * c);
            }
            sum
        }
    };
    let w = &ctx.weights;
    let total = if obstacle.is_infinite() {
        f64::INFINITY
    } else {
        w.smoothness * smoothness + w.end_offset * end_offset + w.obstacle * obstacle + w.speed_dev * speed_dev
    };
    CostTerms {
        smoothness,
        end_offset,
        obstacle,
        speed_dev,
        total,
    }
}

/// Clearance of a curve against obstacles, sampled every [`COLLISION_STEP`].
pub fn check_collision(curve: &CandidateCurve, ctx: &ScoringContext) -> CollisionReport {
    match sample_clearances(curve, ctx) {
        None => CollisionReport {
            feasible: false,
            min_clearance: f64::NEG_INFINITY,
        },
        Some(cs) => {
            let min_clearance = cs.into_iter().fold(f64::MAX, f64::min);
            CollisionReport {
                feasible: min_clearance >= ctx.safety_margin,
                min_clearance,
            }
        }
    }
}

/// Lattice with every edge connected and scored.
/// `edges[k][i][j]` joins node `i` of layer `k-1` (the start for `k = 0`) to node `j` of layer `k`.
#[derive(Debug, Clone)]
pub struct ScoredLattice {
    pub lattice: Lattice,
    pub edges: Vec<Vec<Vec<CandidateCurve>>>,
}

impl ScoredLattice {
    pub fn cost(&self, layer: usize, from: usize, to: usize) -> f64 {
        self.edges[layer][from][to].costs.total
    }
}

pub fn score_lattice(lattice: &Lattice, ctx: &ScoringContext) -> Result<ScoredLattice, CoreError> {
    let n = lattice.nodes_per_layer();
    let mut edges = Vec::with_capacity(lattice.stations.len());
    for (k, &end_s) in lattice.stations.iter().enumerate() {
        let starts: Vec<FrenetState> = if k == 0 {
            vec![lattice.start]
        } else {
            (0..n)
                .map(|i| {
                    let (d, v) = lattice.node(i);
                    FrenetState {
                        s: lattice.stations[k - 1],
                        d,
                        d_prime: 0.0,
                        d_pprime: 0.0,
                        speed: v,
                    }
                })
                .collect()
        };
        let mut layer = Vec::with_capacity(starts.len());
        for start in &starts {
            let mut row = Vec::with_capacity(n);
            for j in 0..n {
                let (d, v) = lattice.node(j);
                let mut curve = connect(start, end_s, d, v)?;
                curve.costs = score(&curve, ctx);
                row.push(curve);
            }
            layer.push(row);
        }
        edges.push(layer);
    }
    Ok(ScoredLattice {
        lattice: lattice.clone(),
        edges,
    })
}

/// Tie-break key: nearer the reference line first, then the slower node.
fn tie_key(lattice: &Lattice, j: usize) -> (f64, f64, usize) {
    let (d, v) = lattice.node(j);
    (d.abs(), v, j)
}

fn better(cost: f64, key: (f64, f64, usize), best_cost: f64, best_key: (f64, f64, usize)) -> bool {
    cost < best_cost || (cost == best_cost && key < best_key)
}

/// Dynamic programming over the layered DAG.
pub fn search_min_cost(scored: &ScoredLattice) -> Result<Vec<CandidateCurve>, CoreError> {
    let lat = &scored.lattice;
    let n = lat.nodes_per_layer();
    let layers = lat.stations.len();
    if layers == 0 {
        return Err(CoreError::NoFeasiblePath);
    }
    let mut cost: Vec<f64> = (0..n).map(|j| scored.cost(0, 0, j)).collect();
    let mut pred: Vec<Vec<usize>> = vec![vec![0; n]];
    for k in 1..layers {
        let mut next = vec![f64::INFINITY; n];
        let mut back = vec![usize::MAX; n];
        for j in 0..n {
            for i in 0..n {
                let c = cost[i] + scored.cost(k, i, j);
                if back[j] == usize::MAX || better(c, tie_key(lat, i), next[j], tie_key(lat, back[j])) {
                    next[j] = c;
                    back[j] = i;
                }
            }
        }
        cost = next;
        pred.push(back);
    }
    let mut end = 0;
    for j in 1..n {
        if better(cost[j], tie_key(lat, j), cost[end], tie_key(lat, end)) {
            end = j;
        }
    }
    if !cost[end].is_finite() {
        return Err(CoreError::NoFeasiblePath);
    }
    let mut chain = Vec::with_capacity(layers);
    let mut j = end;
    for k in (0..layers).rev() {
        let i = if k == 0 { 0 } else { pred[k][j] };
        chain.push(scored.edges[k][i][j].clone());
        j = i;
    }
    chain.reverse();
    Ok(chain)
}

pub fn chain_cost(chain: &[CandidateCurve]) -> f64 {
    chain.iter().fold(0.0, |acc, c| acc + c.costs.total)
}

/// Converts a chain of curves into Cartesian samples spaced about `spacing`
/// apart, with arc length and curvature measured on the Cartesian path.
pub fn chain_to_path(path: &ReferencePath, chain: &[CandidateCurve], spacing: f64) -> Result<Vec<PathPoint>, CoreError> {
    let mut poses: Vec<(Pose2D, f64)> = Vec::new();
    for (k, curve) in chain.iter().enumerate() {
        for (i, sigma) in curve.sigma_samples(spacing).enumerate() {
            if k > 0 && i == 0 {
                continue;
            }
            let fs = curve.state_at(sigma);
            let limit = path.segment_at(fs.s.min(path.length()))?.speed_limit.min(curve.target_speed);
            poses.push((frenet_to_cartesian(path, &fs)?, limit));
        }
    }
    let n = poses.len();
    let mut out = Vec::with_capacity(n);
    let mut s = 0.0;
    for i in 0..n {
        if i > 0 {
            s += poses[i].0.distance_to(&poses[i - 1].0);
        }
        let curvature = if n < 3 {
            0.0
        } else {
            let j = i.clamp(1, n - 2);
            menger_curvature(poses[j - 1].0.position(), poses[j].0.position(), poses[j + 1].0.position())
        };
        out.push(PathPoint {
            pose: poses[i].0,
            curvature,
            s,
            speed_limit: poses[i].1,
        });
    }
    Ok(out)
}
