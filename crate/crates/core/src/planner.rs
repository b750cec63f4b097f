//! Free-flow path planning around static obstacles.
//!
//! Obstacle outline vertices plus an agent's origin and destination form a
//! visibility graph; A* finds the shortest polyline through it, and interior
//! waypoints are then pushed away from the obstacle corners they touch.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use crate::geometry::{
    self, closest_point_on_segment, orientation, point_in_polygon, segments_cross_properly,
    signed_area2, Segment, Vec2, EPSILON,
};

#[derive(Debug, Clone, PartialEq)]
pub enum PlannerError {
    TooFewVertices { polygon: usize },
    SelfIntersecting { polygon: usize },
    ZeroArea { polygon: usize },
    NonFiniteVertex { polygon: usize },
    /// Origin or destination lies strictly inside an obstacle.
    EndpointInObstacle { point: Vec2, polygon: usize },
    Unreachable,
    UnknownNode(usize),
}

impl fmt::Display for PlannerError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlannerError::TooFewVertices { polygon } => {
                write!(f, "obstacle {polygon} has fewer than 3 vertices")
            }
            PlannerError::SelfIntersecting { polygon } => {
                write!(f, "obstacle {polygon} is self-intersecting")
            }
            PlannerError::ZeroArea { polygon } => write!(f, "obstacle {polygon} has zero area"),
            PlannerError::NonFiniteVertex { polygon } => {
                write!(f, "obstacle {polygon} has a non-finite vertex")
            }
            PlannerError::EndpointInObstacle { point, polygon } => {
                write!(f, "point {point} lies inside obstacle {polygon}")
            }
            PlannerError::Unreachable => f.write_str("destination is unreachable"),
            PlannerError::UnknownNode(i) => write!(f, "node {i} is not in the graph"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for PlannerError {}

/// Simple polygon, stored counterclockwise.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstaclePolygon {
    vertices: Vec<Vec2>,
}

impl ObstaclePolygon {
    pub fn new(vertices: Vec<Vec2>) -> Result<Self, PlannerError> {
        Self::with_index(vertices, 0)
    }

    /// Like [`ObstaclePolygon::new`] but reports `index` in errors.
    pub fn with_index(mut vertices: Vec<Vec2>, index: usize) -> Result<Self, PlannerError> {
        // closing vertex repeated
        if vertices.len() > 3 && vertices.first() == vertices.last() {
            vertices.pop();
        }
        if vertices.len() < 3 {
            return Err(PlannerError::TooFewVertices { polygon: index });
        }
        if vertices.iter().any(|v| !v.is_finite()) {
            return Err(PlannerError::NonFiniteVertex { polygon: index });
        }
        let n = vertices.len();
        for i in 0..n {
            for j in (i + 1)..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    continue;
                }
                let e1 = Segment {
                    a: vertices[i],
                    b: vertices[(i + 1) % n],
                };
                let e2 = Segment {
                    a: vertices[j],
                    b: vertices[(j + 1) % n],
                };
                if geometry::segments_intersect(e1, e2) {
                    return Err(PlannerError::SelfIntersecting { polygon: index });
                }
            }
        }
        let area2 = signed_area2(&vertices);
        if area2.abs() <= EPSILON {
            return Err(PlannerError::ZeroArea { polygon: index });
        }
        if area2 < 0.0 {
            vertices.reverse();
        }
        Ok(Self { vertices })
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn edges(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn contains(&self, p: Vec2) -> bool {
        point_in_polygon(&self.vertices, p)
    }

    pub fn closest_point(&self, p: Vec2) -> Vec2 {
        geometry::closest_point_on_polygon(&self.vertices, p)
    }

    /// Outward unit bisector of the exterior angle at vertex `i`.
    pub fn outward_bisector(&self, i: usize) -> Vec2 {
        let n = self.vertices.len();
        let v = self.vertices[i];
        let prev = self.vertices[(i + n - 1) % n];
        let next = self.vertices[(i + 1) % n];
        let to_prev = (prev - v).normalize_or_zero();
        let to_next = (next - v).normalize_or_zero();
        let sum = to_prev + to_next;
        // Outward normal of the incoming edge for a CCW polygon.
        let edge_normal = Vec2::new(v.y - prev.y, prev.x - v.x).normalize_or_zero();
        match sum.normalize() {
            None => edge_normal,
            Some(inward) => {
                let convex = orientation(prev, v, next) >= 0;
                if convex {
                    -inward
                } else {
                    inward
                }
            }
        }
    }

    /// Whether the open segment `a`–`b` passes through this polygon: it
    /// either crosses an edge properly or some stretch of it lies strictly
    /// inside. Running along an edge or grazing a vertex does not count.
    pub fn blocks(&self, a: Vec2, b: Vec2) -> bool {
        let seg = Segment { a, b };
        let ab = b - a;
        let len2 = ab.norm_squared();
        if len2 == 0.0 {
            return false;
        }
        let mut cuts: Vec<f64> = vec![0.0, 1.0];
        for (p, q) in self.edges() {
            let edge = Segment { a: p, b: q };
            if segments_cross_properly(seg, edge) {
                return true;
            }
            for v in [p, q] {
                if orientation(a, b, v) == 0 {
                    let t = (v - a).dot(ab) / len2;
                    if t > 0.0 && t < 1.0 {
                        cuts.push(t);
                    }
                }
            }
        }
        cuts.sort_by(f64::total_cmp);
        cuts.windows(2).any(|w| {
            if w[1] - w[0] <= EPSILON {
                return false;
            }
            let mid = a + ab * ((w[0] + w[1]) * 0.5);
            self.contains(mid)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VisibilityGraph {
    nodes: Vec<Vec2>,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<(usize, f64)>>,
    origin: usize,
    destination: usize,
}

impl VisibilityGraph {
    pub fn nodes(&self) -> &[Vec2] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn neighbors(&self, node: usize) -> &[(usize, f64)] {
        &self.adjacency[node]
    }

    pub fn origin(&self) -> usize {
        self.origin
    }

    pub fn destination(&self) -> usize {
        self.destination
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adjacency
            .get(a)
            .is_some_and(|adj| adj.iter().any(|&(n, _)| n == b))
    }
}

fn visible(obstacles: &[ObstaclePolygon], a: Vec2, b: Vec2) -> bool {
    !obstacles.iter().any(|o| o.blocks(a, b))
}

/// Obstacle-vertex part of the visibility graph, shared by all agents of a
/// scenario; endpoints are spliced in per query.
#[derive(Debug, Clone)]
pub struct StaticVisibility {
    obstacles: Vec<ObstaclePolygon>,
    vertices: Vec<Vec2>,
    edges: Vec<Edge>,
}

impl StaticVisibility {
    pub fn new(obstacles: &[ObstaclePolygon]) -> Self {
        let vertices: Vec<Vec2> = obstacles
            .iter()
            .flat_map(|o| o.vertices().iter().copied())
            .filter(|v| !obstacles.iter().any(|o| o.contains(*v)))
            .collect();
        let mut edges = Vec::new();
        for i in 0..vertices.len() {
            for j in (i + 1)..vertices.len() {
                if vertices[i] != vertices[j] && visible(obstacles, vertices[i], vertices[j]) {
                    edges.push(Edge {
                        a: i,
                        b: j,
                        length: vertices[i].distance(vertices[j]),
                    });
                }
            }
        }
        Self {
            obstacles: obstacles.to_vec(),
            vertices,
            edges,
        }
    }

    pub fn obstacles(&self) -> &[ObstaclePolygon] {
        &self.obstacles
    }

    pub fn with_endpoints(
        &self,
        origin: Vec2,
        destination: Vec2,
    ) -> Result<VisibilityGraph, PlannerError> {
        for point in [origin, destination] {
            if let Some(polygon) = self.obstacles.iter().position(|o| o.contains(point)) {
                return Err(PlannerError::EndpointInObstacle { point, polygon });
            }
        }
        let mut nodes = self.vertices.clone();
        let origin_idx = nodes.len();
        nodes.push(origin);
        let destination_idx = nodes.len();
        nodes.push(destination);

        let mut edges = self.edges.clone();
        for (idx, p) in [(origin_idx, origin), (destination_idx, destination)] {
            for (i, v) in self.vertices.iter().enumerate() {
                if *v != p && visible(&self.obstacles, p, *v) {
                    edges.push(Edge {
                        a: i,
                        b: idx,
                        length: p.distance(*v),
                    });
                }
            }
        }
        if origin != destination && visible(&self.obstacles, origin, destination) {
            edges.push(Edge {
                a: origin_idx,
                b: destination_idx,
                length: origin.distance(destination),
            });
        }

        let mut adjacency = vec![Vec::new(); nodes.len()];
        for e in &edges {
            adjacency[e.a].push((e.b, e.length));
            adjacency[e.b].push((e.a, e.length));
        }
        for adj in &mut adjacency {
            adj.sort_by_key(|&(n, _)| n);
        }
        Ok(VisibilityGraph {
            nodes,
            edges,
            adjacency,
            origin: origin_idx,
            destination: destination_idx,
        })
    }
}

pub fn build_visibility_graph(
    obstacles: &[ObstaclePolygon],
    origin: Vec2,
    destination: Vec2,
) -> Result<VisibilityGraph, PlannerError> {
    StaticVisibility::new(obstacles).with_endpoints(origin, destination)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaypointPath {
    waypoints: Vec<Vec2>,
    total_length: f64,
}

impl WaypointPath {
    /// Builds a path, dropping consecutive duplicates.
    pub fn new(points: Vec<Vec2>) -> Self {
        let mut waypoints: Vec<Vec2> = Vec::with_capacity(points.len());
        for p in points {
            if waypoints.last() != Some(&p) {
                waypoints.push(p);
            }
        }
        let total_length = waypoints.windows(2).map(|w| w[0].distance(w[1])).sum();
        Self {
            waypoints,
            total_length,
        }
    }

    pub fn waypoints(&self) -> &[Vec2] {
        &self.waypoints
    }

    pub fn total_length(&self) -> f64 {
        self.total_length
    }

    pub fn into_waypoints(self) -> Vec<Vec2> {
        self.waypoints
    }
}

// Min-heap entry ordered by (f, h, node).
#[derive(Debug, Clone, Copy)]
struct OpenEntry {
    f: f64,
    h: f64,
    node: usize,
}

impl PartialEq for OpenEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for OpenEntry {}

impl PartialOrd for OpenEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OpenEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.h.total_cmp(&self.h))
            .then_with(|| other.node.cmp(&self.node))
    }
}

/// A* with the straight-line heuristic. Ties are broken on
/// (f-cost, h-cost, node index).
pub fn plan_path(
    graph: &VisibilityGraph,
    from: usize,
    to: usize,
) -> Result<WaypointPath, PlannerError> {
    let n = graph.nodes.len();
    for idx in [from, to] {
        if idx >= n {
            return Err(PlannerError::UnknownNode(idx));
        }
    }
    let goal = graph.nodes[to];
    let heuristic = |i: usize| graph.nodes[i].distance(goal);

    let mut g = vec![f64::INFINITY; n];
    let mut parent: Vec<Option<usize>> = vec![None; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();
    g[from] = 0.0;
    open.push(OpenEntry {
        f: heuristic(from),
        h: heuristic(from),
        node: from,
    });

    while let Some(OpenEntry { node, .. }) = open.pop() {
        if closed[node] {
            continue;
        }
        if node == to {
            let mut chain = vec![to];
            let mut cur = to;
            while let Some(p) = parent[cur] {
                chain.push(p);
                cur = p;
            }
            chain.reverse();
            return Ok(WaypointPath::new(
                chain.into_iter().map(|i| graph.nodes[i]).collect(),
            ));
        }
        closed[node] = true;
        for &(next, w) in &graph.adjacency[node] {
            if closed[next] {
                continue;
            }
            let cand = g[node] + w;
            if cand < g[next] {
                g[next] = cand;
                parent[next] = Some(node);
                let h = heuristic(next);
                open.push(OpenEntry {
                    f: cand + h,
                    h,
                    node: next,
                });
            }
        }
    }
    Err(PlannerError::Unreachable)
}

fn segment_enters_obstacle(obstacles: &[ObstaclePolygon], a: Vec2, b: Vec2) -> bool {
    if a == b {
        return obstacles.iter().any(|o| o.contains(a));
    }
    !visible(obstacles, a, b)
}

/// Moves every interior waypoint that sits on an obstacle vertex `clearance`
/// meters along the vertex's outward bisector. If the displaced point or
/// its adjoining segments would enter an obstacle the offset is halved,
/// up to a fixed number of times, before falling back to the vertex itself.
pub fn offset_waypoints(
    path: &WaypointPath,
    obstacles: &[ObstaclePolygon],
    clearance: f64,
) -> WaypointPath {
    const MAX_HALVINGS: usize = 8;

    let mut points = path.waypoints.clone();
    if clearance <= 0.0 || points.len() < 3 {
        return path.clone();
    }
    for i in 1..points.len() - 1 {
        let wp = points[i];
        let corner = obstacles.iter().find_map(|o| {
            o.vertices()
                .iter()
                .position(|v| v.distance(wp) <= EPSILON)
                .map(|vi| o.outward_bisector(vi))
        });
        let Some(dir) = corner else { continue };
        if dir == Vec2::ZERO {
            continue;
        }
        let (prev, next) = (points[i - 1], points[i + 1]);
        let mut offset = clearance;
        for _ in 0..=MAX_HALVINGS {
            let cand = wp + dir * offset;
            let ok = !obstacles.iter().any(|o| o.contains(cand))
                && !segment_enters_obstacle(obstacles, prev, cand)
                && !segment_enters_obstacle(obstacles, cand, next);
            if ok {
                points[i] = cand;
                break;
            }
            offset *= 0.5;
        }
    }
    WaypointPath::new(points)
}

/// Plans, splices and offsets in one call.
pub fn plan_route(
    visibility: &StaticVisibility,
    origin: Vec2,
    destination: Vec2,
    clearance: f64,
) -> Result<WaypointPath, PlannerError> {
    let graph = visibility.with_endpoints(origin, destination)?;
    let raw = plan_path(&graph, graph.origin(), graph.destination())?;
    Ok(offset_waypoints(&raw, visibility.obstacles(), clearance))
}

/// Distance from `p` to the nearest obstacle outline together with that
/// outline point.
pub fn nearest_obstacle_point(obstacles: &[ObstaclePolygon], p: Vec2) -> Option<(f64, Vec2)> {
    obstacles
        .iter()
        .map(|o| {
            let c = o.closest_point(p);
            (c.distance(p), c)
        })
        .min_by(|a, b| a.0.total_cmp(&b.0))
}

#[doc(hidden)]
pub fn point_segment_distance(a: Vec2, b: Vec2, p: Vec2) -> f64 {
    closest_point_on_segment(a, b, p).distance(p)
}
