//! Road network, global route search and the arc-length reference path that
//! the Frenet planner works against.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::geom::{cross, wrap_angle, Vec2};

pub type NodeId = u64;

/// Relative slack allowed when an edge is declared shorter than its chord.
const LENGTH_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RoadClass {
    UrbanMain,
    Residential,
    Unstructured,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub position: Vec2,
    pub meta: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub from: NodeId,
    pub to: NodeId,
    pub length: f64,
    pub road_class: RoadClass,
    pub lane_width: f64,
    pub speed_limit: f64,
    pub one_way: bool,
    pub overtaking_allowed: bool,
    /// Interior shape points between `from` and `to`.
    pub shape: Vec<Vec2>,
}

/// Edge description used when building a graph. `length` defaults to the
/// length of the shape polyline.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSpec {
    pub from: NodeId,
    pub to: NodeId,
    pub length: Option<f64>,
    pub road_class: RoadClass,
    pub lane_width: f64,
    pub speed_limit: f64,
    pub one_way: bool,
    pub overtaking_allowed: bool,
    pub shape: Vec<Vec2>,
}

impl EdgeSpec {
    pub fn new(from: NodeId, to: NodeId) -> Self {
        Self {
            from,
            to,
            length: None,
            road_class: RoadClass::UrbanMain,
            lane_width: 3.5,
            speed_limit: 5.0,
            one_way: false,
            overtaking_allowed: true,
            shape: Vec::new(),
        }
    }

    pub fn length(mut self, length: f64) -> Self {
        self.length = Some(length);
        self
    }

    pub fn road_class(mut self, class: RoadClass) -> Self {
        self.road_class = class;
        self
    }

    pub fn one_way(mut self, one_way: bool) -> Self {
        self.one_way = one_way;
        self
    }

    pub fn speed_limit(mut self, v: f64) -> Self {
        self.speed_limit = v;
        self
    }

    pub fn shape(mut self, shape: Vec<Vec2>) -> Self {
        self.shape = shape;
        self
    }
}

#[derive(Debug, Clone, Default)]
pub struct RoadGraph {
    nodes: BTreeMap<NodeId, Node>,
    edges: Vec<Edge>,
    /// Outgoing traversals per node: (edge index, reversed, neighbour).
    adjacency: BTreeMap<NodeId, Vec<(usize, bool, NodeId)>>,
}

impl RoadGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, id: NodeId, position: Vec2) -> Result<(), CoreError> {
        self.add_node_with_meta(id, position, None)
    }

    pub fn add_node_with_meta(
        &mut self,
        id: NodeId,
        position: Vec2,
        meta: Option<String>,
    ) -> Result<(), CoreError> {
        if !(position.x.is_finite() && position.y.is_finite()) {
            return Err(CoreError::InvalidArgument(format!("node {id} has non-finite position")));
        }
        if self.nodes.contains_key(&id) {
            return Err(CoreError::InvalidArgument(format!("duplicate node id {id}")));
        }
        self.nodes.insert(id, Node { id, position, meta });
        self.adjacency.entry(id).or_default();
        Ok(())
    }

    pub fn add_edge(&mut self, spec: EdgeSpec) -> Result<usize, CoreError> {
        let a = self.position(spec.from)?;
        let b = self.position(spec.to)?;
        if spec.from == spec.to {
            return Err(CoreError::InvalidArgument(format!(
                "self-loop on node {} is not allowed",
                spec.from
            )));
        }
        if !(spec.lane_width > 0.0 && spec.speed_limit > 0.0) {
            return Err(CoreError::InvalidArgument(
                "lane_width and speed_limit must be positive".into(),
            ));
        }
        let geometric = polyline_length(&edge_polyline(a, &spec.shape, b));
        let chord = (b - a).norm();
        let length = spec.length.unwrap_or(geometric);
        if !(length.is_finite() && length > 0.0) {
            return Err(CoreError::InvalidArgument("edge length must be positive".into()));
        }
        if length < chord * (1.0 - LENGTH_SLACK) {
            return Err(CoreError::InvalidArgument(format!(
                "edge {}->{} length {length} is shorter than the straight-line distance {chord}",
                spec.from, spec.to
            )));
        }
        let idx = self.edges.len();
        self.edges.push(Edge {
            from: spec.from,
            to: spec.to,
            length,
            road_class: spec.road_class,
            lane_width: spec.lane_width,
            speed_limit: spec.speed_limit,
            one_way: spec.one_way,
            overtaking_allowed: spec.overtaking_allowed,
            shape: spec.shape,
        });
        self.adjacency.entry(spec.from).or_default().push((idx, false, spec.to));
        if !spec.one_way {
            self.adjacency.entry(spec.to).or_default().push((idx, true, spec.from));
        }
        Ok(idx)
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn position(&self, id: NodeId) -> Result<Vec2, CoreError> {
        self.nodes
            .get(&id)
            .map(|n| n.position)
            .ok_or_else(|| CoreError::InvalidArgument(format!("unknown node id {id}")))
    }

    /// Outgoing traversals of `id` as (edge index, reversed, neighbour).
    pub fn neighbours(&self, id: NodeId) -> &[(usize, bool, NodeId)] {
        self.adjacency.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Nearest node to `p` within `radius`, smaller id on ties.
    pub fn nearest_node_within(&self, p: Vec2, radius: f64) -> Option<NodeId> {
        self.nodes
            .values()
            .map(|n| ((n.position - p).norm(), n.id))
            .filter(|(d, _)| *d <= radius)
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .map(|(_, id)| id)
    }

    fn next_node_id(&self) -> NodeId {
        self.nodes.keys().next_back().map_or(0, |id| id + 1)
    }

    /// Full polyline of an edge in traversal direction.
    pub fn edge_polyline(&self, edge: usize, reversed: bool) -> Vec<Vec2> {
        let e = &self.edges[edge];
        let mut pts = edge_polyline(self.nodes[&e.from].position, &e.shape, self.nodes[&e.to].position);
        if reversed {
            pts.reverse();
        }
        pts
    }
}

fn edge_polyline(a: Vec2, shape: &[Vec2], b: Vec2) -> Vec<Vec2> {
    let mut pts = Vec::with_capacity(shape.len() + 2);
    pts.push(a);
    pts.extend_from_slice(shape);
    pts.push(b);
    pts
}

pub fn polyline_length(pts: &[Vec2]) -> f64 {
    pts.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RouteLeg {
    pub edge: usize,
    pub reversed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub nodes: Vec<NodeId>,
    pub legs: Vec<RouteLeg>,
    pub total_length: f64,
    pub road_classes: Vec<RoadClass>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Frontier {
    f: f64,
    g: f64,
    node: NodeId,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap: invert so the smallest f (then id) pops first.
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A* over edge lengths with a Euclidean heuristic.
pub fn plan_route(graph: &RoadGraph, start: NodeId, goal: NodeId) -> Result<Route, CoreError> {
    graph.position(start)?;
    let goal_pos = graph.position(goal)?;
    let h = |id: NodeId| (graph.nodes[&id].position - goal_pos).norm();

    let mut best_g: BTreeMap<NodeId, f64> = BTreeMap::new();
    let mut parent: BTreeMap<NodeId, (NodeId, RouteLeg)> = BTreeMap::new();
    let mut open = BinaryHeap::new();
    best_g.insert(start, 0.0);
    open.push(Frontier {
        f: h(start),
        g: 0.0,
        node: start,
    });

    while let Some(Frontier { g, node, .. }) = open.pop() {
        if g > best_g[&node] {
            continue; // stale entry
        }
        if node == goal {
            return Ok(reconstruct(graph, start, goal, &parent));
        }
        for &(edge, reversed, next) in graph.neighbours(node) {
            let cand = g + graph.edges[edge].length;
            if best_g.get(&next).map_or(true, |&old| cand < old) {
                best_g.insert(next, cand);
                parent.insert(next, (node, RouteLeg { edge, reversed }));
                open.push(Frontier {
                    f: cand + h(next),
                    g: cand,
                    node: next,
                });
            }
        }
    }
    Err(CoreError::UnreachableGoal { start, goal })
}

fn reconstruct(
    graph: &RoadGraph,
    start: NodeId,
    goal: NodeId,
    parent: &BTreeMap<NodeId, (NodeId, RouteLeg)>,
) -> Route {
    let mut nodes = vec![goal];
    let mut legs = Vec::new();
    let mut cur = goal;
    while cur != start {
        let (prev, leg) = parent[&cur];
        legs.push(leg);
        nodes.push(prev);
        cur = prev;
    }
    nodes.reverse();
    legs.reverse();
    let total_length = legs.iter().fold(0.0, |acc, l| acc + graph.edges[l.edge].length);
    let road_classes = legs.iter().map(|l| graph.edges[l.edge].road_class).collect();
    Route {
        nodes,
        legs,
        total_length,
        road_classes,
    }
}

/// Parameters for inserting a human-demonstrated route.
#[derive(Debug, Clone, PartialEq)]
pub struct Demonstration {
    pub road_class: RoadClass,
    pub snap_radius: f64,
    pub lane_width: f64,
    pub speed_limit: f64,
    pub one_way: bool,
}

impl Default for Demonstration {
    fn default() -> Self {
        Self {
            road_class: RoadClass::Unstructured,
            snap_radius: 2.0,
            lane_width: 3.0,
            speed_limit: 3.0,
            one_way: false,
        }
    }
}

/// Inserts a demonstrated polyline as a chain of nodes and edges. The end
/// points snap to existing nodes within `snap_radius`.
pub fn add_demonstration(
    mut graph: RoadGraph,
    polyline: &[Vec2],
    demo: &Demonstration,
) -> Result<RoadGraph, CoreError> {
    if polyline.len() < 2 {
        return Err(CoreError::InvalidArgument(
            "demonstration needs at least two points".into(),
        ));
    }
    if polyline.iter().any(|p| !(p.x.is_finite() && p.y.is_finite())) {
        return Err(CoreError::InvalidArgument("demonstration has non-finite points".into()));
    }
    let mut pts: Vec<Vec2> = Vec::with_capacity(polyline.len());
    for &p in polyline {
        if pts.last() != Some(&p) {
            pts.push(p);
        }
    }
    if pts.len() < 2 {
        return Err(CoreError::InvalidArgument(
            "demonstration points are all identical".into(),
        ));
    }

    let last = pts.len() - 1;
    let mut ids: Vec<NodeId> = Vec::with_capacity(pts.len());
    for (i, &p) in pts.iter().enumerate() {
        let snapped = if i == 0 || i == last {
            graph.nearest_node_within(p, demo.snap_radius)
        } else {
            None
        };
        let id = match snapped {
            Some(id) => id,
            None => {
                let id = graph.next_node_id();
                graph.add_node_with_meta(id, p, Some("demonstration".into()))?;
                id
            }
        };
        ids.push(id);
    }
    for w in ids.windows(2) {
        if w[0] == w[1] {
            continue;
        }
        graph.add_edge(EdgeSpec {
            from: w[0],
            to: w[1],
            length: None,
            road_class: demo.road_class,
            lane_width: demo.lane_width,
            speed_limit: demo.speed_limit,
            one_way: demo.one_way,
            overtaking_allowed: false,
            shape: Vec::new(),
        })?;
    }
    Ok(graph)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSample {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub curvature: f64,
    pub s: f64,
}

impl PathSample {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

/// Road attributes over the half-open arc-length interval `[s_start, s_end)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSegment {
    pub s_start: f64,
    pub s_end: f64,
    pub road_class: RoadClass,
    pub speed_limit: f64,
    pub lane_width: f64,
    pub overtaking_allowed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePath {
    samples: Vec<PathSample>,
    spacing: f64,
    segments: Vec<PathSegment>,
}

impl ReferencePath {
    /// Resamples a polyline at `spacing` with a single road segment.
    pub fn from_polyline(points: &[Vec2], spacing: f64, segment: PathSegment) -> Result<Self, CoreError> {
        let mut knots = Vec::with_capacity(points.len());
        let mut s = 0.0;
        for (i, &p) in points.iter().enumerate() {
            if i > 0 {
                s += (p - points[i - 1]).norm();
            }
            knots.push((s, p));
        }
        let total = s;
        Self::resample(
            &knots,
            spacing,
            vec![PathSegment {
                s_start: 0.0,
                s_end: total,
                ..segment
            }],
        )
    }

    /// Wraps precomputed samples (e.g. analytic curves).
    pub fn from_samples(samples: Vec<PathSample>, segments: Vec<PathSegment>) -> Result<Self, CoreError> {
        if samples.len() < 2 {
            return Err(CoreError::InvalidArgument("reference path needs two samples".into()));
        }
        if samples[0].s != 0.0 || samples.windows(2).any(|w| !(w[1].s > w[0].s)) {
            return Err(CoreError::InvalidArgument(
                "sample arc lengths must start at 0 and strictly increase".into(),
            ));
        }
        if segments.is_empty() {
            return Err(CoreError::InvalidArgument("reference path needs a segment".into()));
        }
        let spacing = samples[samples.len() - 1].s / (samples.len() - 1) as f64;
        Ok(Self {
            samples,
            spacing,
            segments,
        })
    }

    /// `knots` are (arc length, point) pairs with non-decreasing s.
    fn resample(knots: &[(f64, Vec2)], spacing: f64, segments: Vec<PathSegment>) -> Result<Self, CoreError> {
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(CoreError::InvalidArgument("spacing must be positive".into()));
        }
        let total = knots.last().map_or(0.0, |k| k.0);
        if !(total > 0.0) {
            return Err(CoreError::InvalidArgument("path has zero length".into()));
        }
        let tol = 1e-9 * total.max(1.0);
        let mut stations: Vec<f64> = Vec::new();
        let mut k = 0usize;
        loop {
            let s = k as f64 * spacing;
            if s >= total - tol {
                break;
            }
            stations.push(s);
            k += 1;
        }
        stations.push(total);

        let mut positions = Vec::with_capacity(stations.len());
        let mut j = 0usize;
        for &s in &stations {
            while j + 2 < knots.len() && knots[j + 1].0 <= s {
                j += 1;
            }
            let (sa, a) = knots[j];
            let (sb, b) = knots[j + 1];
            let p = if sb > sa {
                a + (b - a) * ((s - sa) / (sb - sa)).clamp(0.0, 1.0)
            } else {
                b
            };
            positions.push(p);
        }
        let samples = differentiate(&positions, &stations);
        Ok(Self {
            samples,
            spacing,
            segments,
        })
    }

    pub fn samples(&self) -> &[PathSample] {
        &self.samples
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn segments(&self) -> &[PathSegment] {
        &self.segments
    }

    pub fn length(&self) -> f64 {
        self.samples[self.samples.len() - 1].s
    }

    /// Segment containing `s` (half-open; the path end belongs to the last).
    pub fn segment_at(&self, s: f64) -> Result<&PathSegment, CoreError> {
        let len = self.length();
        if !(s >= 0.0 && s <= len) {
            return Err(CoreError::OutOfBounds(format!("s = {s} outside path [0, {len}]")));
        }
        let idx = self.segments.partition_point(|seg| seg.s_start <= s);
        Ok(&self.segments[idx.saturating_sub(1)])
    }

    /// Index `i` such that `samples[i].s <= s < samples[i+1].s`, clamped.
    pub fn segment_index(&self, s: f64) -> usize {
        let hi = self.samples.partition_point(|p| p.s <= s);
        hi.saturating_sub(1).min(self.samples.len() - 2)
    }

    /// Position, heading and curvature at `s` (clamped to the path).
    pub fn eval(&self, s: f64) -> (Vec2, f64, f64) {
        let i = self.segment_index(s);
        self.eval_in_segment(i, (s - self.samples[i].s) / (self.samples[i + 1].s - self.samples[i].s))
    }

    /// Evaluates at fraction `u` of the sample interval `i`.
    pub fn eval_in_segment(&self, i: usize, u: f64) -> (Vec2, f64, f64) {
        let (a, b) = (&self.samples[i], &self.samples[i + 1]);
        let pos = a.position() + (b.position() - a.position()) * u;
        let heading = wrap_angle(a.heading + u * wrap_angle(b.heading - a.heading));
        let curvature = a.curvature + u * (b.curvature - a.curvature);
        (pos, heading, curvature)
    }

    pub fn max_abs_curvature(&self) -> f64 {
        self.samples.iter().map(|p| p.curvature.abs()).fold(0.0, f64::max)
    }
}

/// Heading from central differences, curvature from the signed three-point
/// (Menger) formula; end samples copy their neighbour.
fn differentiate(positions: &[Vec2], stations: &[f64]) -> Vec<PathSample> {
    let n = positions.len();
    let mut samples: Vec<PathSample> = positions
        .iter()
        .zip(stations)
        .map(|(p, &s)| PathSample {
            x: p.x,
            y: p.y,
            heading: 0.0,
            curvature: 0.0,
            s,
        })
        .collect();
    for i in 0..n {
        let (a, b) = (positions[i.saturating_sub(1)], positions[(i + 1).min(n - 1)]);
        let t = b - a;
        samples[i].heading = t.y.atan2(t.x);
    }
    if n >= 3 {
        for i in 1..n - 1 {
            samples[i].curvature = menger_curvature(positions[i - 1], positions[i], positions[i + 1]);
        }
        samples[0].curvature = samples[1].curvature;
        samples[n - 1].curvature = samples[n - 2].curvature;
    }
    samples
}

pub fn menger_curvature(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    let denom = (b - a).norm() * (c - b).norm() * (c - a).norm();
    if denom <= 0.0 {
        0.0
    } else {
        2.0 * cross(b - a, c - b) / denom
    }
}

/// Concatenates the route's edge polylines and resamples them at `spacing`.
/// Arc length along each edge is scaled so the path length equals the
/// route's total length.
pub fn route_to_reference(graph: &RoadGraph, route: &Route, spacing: f64) -> Result<ReferencePath, CoreError> {
    if route.legs.is_empty() {
        return Err(CoreError::InvalidArgument("route has no edges".into()));
    }
    let mut knots: Vec<(f64, Vec2)> = Vec::new();
    let mut segments = Vec::with_capacity(route.legs.len());
    let mut base = 0.0;
    for leg in &route.legs {
        let edge = graph
            .edges
            .get(leg.edge)
            .ok_or_else(|| CoreError::InvalidArgument(format!("route references missing edge {}", leg.edge)))?;
        let pts = graph.edge_polyline(leg.edge, leg.reversed);
        let geometric = polyline_length(&pts);
        let scale = if geometric > 0.0 { edge.length / geometric } else { 0.0 };
        let mut cum = 0.0;
        for (i, &p) in pts.iter().enumerate() {
            if i > 0 {
                cum += (p - pts[i - 1]).norm();
            } else if !knots.is_empty() {
                continue; // shared joint with the previous leg
            }
            let s = if i == pts.len() - 1 { base + edge.length } else { base + cum * scale };
            knots.push((s, p));
        }
        segments.push(PathSegment {
            s_start: base,
            s_end: base + edge.length,
            road_class: edge.road_class,
            speed_limit: edge.speed_limit,
            lane_width: edge.lane_width,
            overtaking_allowed: edge.overtaking_allowed,
        });
        base += edge.length;
    }
    ReferencePath::resample(&knots, spacing, segments)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Plain Dijkstra over a dense scan, independent of the A* code path.
    fn dijkstra(graph: &RoadGraph, start: NodeId, goal: NodeId) -> Option<f64> {
        let ids: Vec<NodeId> = graph.nodes().map(|n| n.id).collect();
        let mut dist: BTreeMap<NodeId, f64> = ids.iter().map(|&i| (i, f64::INFINITY)).collect();
        let mut done: BTreeMap<NodeId, bool> = ids.iter().map(|&i| (i, false)).collect();
        dist.insert(start, 0.0);
        loop {
            let cur = ids
                .iter()
                .filter(|i| !done[i] && dist[i].is_finite())
                .min_by(|a, b| dist[a].total_cmp(&dist[b]))
                .copied()?;
            if cur == goal {
                return Some(dist[&cur]);
            }
            done.insert(cur, true);
            for e in graph.edges() {
                let next = if e.from == cur {
                    e.to
                } else if e.to == cur && !e.one_way {
                    e.from
                } else {
                    continue;
                };
                let cand = dist[&cur] + e.length;
                if cand < dist[&next] {
                    dist.insert(next, cand);
                }
            }
        }
    }

    pub(crate) fn random_graph(seed: u64, n: usize) -> RoadGraph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = RoadGraph::new();
        for id in 0..n as u64 {
            g.add_node(id, Vec2::new(rng.random_range(0.0..1000.0), rng.random_range(0.0..1000.0)))
                .unwrap();
        }
        for id in 0..n as u64 {
            let p = g.position(id).unwrap();
            let mut near: Vec<(f64, NodeId)> = (0..n as u64)
                .filter(|&o| o != id)
                .map(|o| ((g.position(o).unwrap() - p).norm(), o))
                .collect();
            near.sort_by(|a, b| a.0.total_cmp(&b.0));
            for &(d, o) in near.iter().take(3) {
                let stretch = 1.0 + rng.random_range(0.0..0.5);
                let spec = EdgeSpec::new(id, o).length(d * stretch).one_way(rng.random_bool(0.3));
                g.add_edge(spec).unwrap();
            }
        }
        g
    }

    fn triangle() -> RoadGraph {
        let mut g = RoadGraph::new();
        g.add_node(1, Vec2::new(0.0, 0.0)).unwrap();
        g.add_node(2, Vec2::new(0.5, 0.5)).unwrap();
        g.add_node(3, Vec2::new(1.0, 0.0)).unwrap();
        g.add_edge(EdgeSpec::new(1, 2).length(1.0)).unwrap();
        g.add_edge(EdgeSpec::new(2, 3).length(1.0)).unwrap();
        g.add_edge(EdgeSpec::new(1, 3).length(3.0)).unwrap();
        g
    }

    #[test]
    fn trivial_and_triangle_routes() {
        let g = triangle();
        let r = plan_route(&g, 1, 1).unwrap();
        assert_eq!(r.nodes, vec![1]);
        assert_eq!(r.total_length, 0.0);
        let r = plan_route(&g, 1, 3).unwrap();
        assert_eq!(r.nodes, vec![1, 2, 3]);
        assert_eq!(r.total_length, 2.0);
        assert!(matches!(plan_route(&g, 1, 9), Err(CoreError::InvalidArgument(_))));
    }

    #[test]
    fn one_way_and_unreachable() {
        let mut g = RoadGraph::new();
        g.add_node(1, Vec2::new(0.0, 0.0)).unwrap();
        g.add_node(2, Vec2::new(1.0, 0.0)).unwrap();
        g.add_node(3, Vec2::new(5.0, 0.0)).unwrap();
        g.add_edge(EdgeSpec::new(1, 2).one_way(true)).unwrap();
        assert!(plan_route(&g, 1, 2).is_ok());
        assert!(matches!(plan_route(&g, 2, 1), Err(CoreError::UnreachableGoal { .. })));
        assert!(matches!(plan_route(&g, 1, 3), Err(CoreError::UnreachableGoal { .. })));
    }

    #[test]
    fn edge_shorter_than_chord_rejected() {
        let mut g = RoadGraph::new();
        g.add_node(1, Vec2::new(0.0, 0.0)).unwrap();
        g.add_node(2, Vec2::new(10.0, 0.0)).unwrap();
        assert!(g.add_edge(EdgeSpec::new(1, 2).length(9.0)).is_err());
        assert!(g.add_edge(EdgeSpec::new(1, 7)).is_err());
    }

    #[test]
    fn astar_matches_dijkstra_on_random_graphs() {
        for seed in 0..100 {
            let g = random_graph(seed, 200);
            let (s, t) = (seed % 200, (seed * 37 + 11) % 200);
            let astar = plan_route(&g, s, t).map(|r| r.total_length).ok();
            assert_eq!(astar, dijkstra(&g, s, t), "seed {seed}");
            if let Ok(r) = plan_route(&g, s, t) {
                let sum = r.legs.iter().fold(0.0, |acc, l| acc + g.edges()[l.edge].length);
                assert_eq!(sum, r.total_length);
            }
        }
    }

    #[test]
    fn demonstration_far_from_graph() {
        let g = triangle();
        let g2 = add_demonstration(
            g.clone(),
            &[Vec2::new(100.0, 100.0), Vec2::new(110.0, 100.0)],
            &Demonstration::default(),
        )
        .unwrap();
        assert_eq!(g2.node_count(), g.node_count() + 2);
        assert_eq!(g2.edges().len(), g.edges().len() + 1);
        assert_eq!(g2.edges().last().unwrap().road_class, RoadClass::Unstructured);
    }

    #[test]
    fn demonstration_snaps_start() {
        let g = triangle();
        let g2 = add_demonstration(
            g,
            &[Vec2::new(0.0, -1.0), Vec2::new(0.0, -20.0)],
            &Demonstration::default(),
        )
        .unwrap();
        let e = g2.edges().last().unwrap();
        assert_eq!(e.from, 1);
        assert_eq!(g2.node_count(), 4);
        assert!((e.length - 20.0).abs() < 1e-12);
    }

    #[test]
    fn demonstration_l_shape_lengths() {
        let g = add_demonstration(
            RoadGraph::new(),
            &[Vec2::new(0.0, 0.0), Vec2::new(3.0, 0.0), Vec2::new(3.0, 4.0)],
            &Demonstration::default(),
        )
        .unwrap();
        let lengths: Vec<f64> = g.edges().iter().map(|e| e.length).collect();
        assert_eq!(lengths, vec![3.0, 4.0]);
        let same = [Vec2::new(1.0, 1.0); 3];
        assert!(add_demonstration(RoadGraph::new(), &same, &Demonstration::default()).is_err());
    }

    fn single_edge(shape: Vec<Vec2>, a: Vec2, b: Vec2) -> (RoadGraph, Route) {
        let mut g = RoadGraph::new();
        g.add_node(1, a).unwrap();
        g.add_node(2, b).unwrap();
        g.add_edge(EdgeSpec::new(1, 2).shape(shape)).unwrap();
        let r = plan_route(&g, 1, 2).unwrap();
        (g, r)
    }

    #[test]
    fn straight_reference() {
        let (g, r) = single_edge(vec![], Vec2::new(0.0, 0.0), Vec2::new(10.0, 0.0));
        let path = route_to_reference(&g, &r, 1.0).unwrap();
        assert_eq!(path.samples().len(), 11);
        assert!(path.samples().iter().all(|p| p.curvature == 0.0 && p.heading == 0.0));
        assert_eq!(path.length(), 10.0);
        let coarse = route_to_reference(&g, &r, 25.0).unwrap();
        assert_eq!(coarse.samples().len(), 2);
        assert!(route_to_reference(&g, &r, 0.0).is_err());
        let empty = plan_route(&g, 1, 1).unwrap();
        assert!(route_to_reference(&g, &empty, 1.0).is_err());
    }

    #[test]
    fn quarter_circle_curvature() {
        let radius = 10.0;
        let shape: Vec<Vec2> = (1..180)
            .map(|i| {
                let a = std::f64::consts::FRAC_PI_2 * i as f64 / 180.0;
                Vec2::new(radius * a.sin(), radius * (1.0 - a.cos()))
            })
            .collect();
        let (g, r) = single_edge(shape, Vec2::new(0.0, 0.0), Vec2::new(radius, radius));
        let path = route_to_reference(&g, &r, 0.5).unwrap();
        for p in path.samples() {
            assert!((p.curvature - 0.1).abs() < 0.005, "kappa {}", p.curvature);
        }
        assert!((path.length() - r.total_length).abs() <= 1e-6 * r.total_length);
    }

    #[test]
    fn segments_follow_route_edges() {
        let mut g = RoadGraph::new();
        g.add_node(1, Vec2::new(0.0, 0.0)).unwrap();
        g.add_node(2, Vec2::new(10.0, 0.0)).unwrap();
        g.add_node(3, Vec2::new(20.0, 0.0)).unwrap();
        g.add_edge(EdgeSpec::new(1, 2)).unwrap();
        g.add_edge(EdgeSpec::new(2, 3).road_class(RoadClass::Residential)).unwrap();
        let r = plan_route(&g, 1, 3).unwrap();
        let path = route_to_reference(&g, &r, 1.0).unwrap();
        assert_eq!(path.segment_at(5.0).unwrap().road_class, RoadClass::UrbanMain);
        assert_eq!(path.segment_at(10.0).unwrap().road_class, RoadClass::Residential);
        assert_eq!(path.segment_at(20.0).unwrap().road_class, RoadClass::Residential);
        assert!(path.segment_at(20.5).is_err());
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(32))]
        #[test]
        fn reference_length_matches_route(seed in 0u64..10_000, spacing in 0.3f64..5.0) {
            let g = random_graph(seed, 40);
            if let Ok(r) = plan_route(&g, 0, 39) {
                let path = route_to_reference(&g, &r, spacing).unwrap();
                proptest::prop_assert!((path.length() - r.total_length).abs() <= 1e-6 * r.total_length);
                for w in path.samples().windows(2) {
                    proptest::prop_assert!(w[1].s > w[0].s);
                }
            }
        }
    }
}
