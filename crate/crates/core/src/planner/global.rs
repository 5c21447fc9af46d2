use super::graph::{connect, dijkstra, polyline_length, PlanGraph, ShortestPaths};
use super::PlanMode;
use crate::geom::Vec3;
use crate::voxmap::OccupancyGrid;

/// Sparse per-robot roadmap grown from visited positions.
#[derive(Debug, Clone)]
pub struct GlobalGraph {
    pub graph: PlanGraph,
    pub k_nn: usize,
    pub clearance: usize,
    /// Vertex of the robot's most recent position.
    pub current: usize,
}

/// A route through the global graph, possibly ending with a checked link.
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub waypoints: Vec<Vec3<f64>>,
    pub length: f64,
}

impl GlobalGraph {
    pub fn new(mode: PlanMode, start: Vec3<f64>, k_nn: usize, clearance: usize) -> Self {
        Self {
            graph: PlanGraph::new(mode, start),
            k_nn,
            clearance,
            current: 0,
        }
    }

    pub fn mode(&self) -> PlanMode {
        self.graph.mode
    }

    /// Appends the robot's new position, linked to the previous one by the
    /// traveled polyline and to its nearest neighbors by checked edges.
    pub fn advance(&mut self, grid: &OccupancyGrid<f64>, traveled: &[Vec3<f64>]) -> usize {
        let Some(&p) = traveled.last() else {
            return self.current;
        };
        let prev = self.current;
        if self.graph.vertices[prev].distance(p) < 1e-9 {
            return prev;
        }
        let v = self.graph.add_vertex(p);
        let mut wp = vec![self.graph.vertices[prev]];
        wp.extend_from_slice(traveled);
        let len = polyline_length(&wp);
        self.graph.add_edge(prev, v, len, wp);
        self.rewire(grid, v);
        self.current = v;
        v
    }

    fn rewire(&mut self, grid: &OccupancyGrid<f64>, v: usize) {
        let p = self.graph.vertices[v];
        for (_, j) in self.nearest(p, self.k_nn + 1) {
            if j == v || self.graph.has_edge(v, j) {
                continue;
            }
            let q = self.graph.vertices[j];
            if let Some(wp) = connect(grid, self.mode(), q, p, self.clearance) {
                let len = polyline_length(&wp);
                self.graph.add_edge(j, v, len, wp);
            }
        }
    }

    fn nearest(&self, p: Vec3<f64>, k: usize) -> Vec<(f64, usize)> {
        let mut order: Vec<(f64, usize)> = self
            .graph
            .vertices
            .iter()
            .enumerate()
            .map(|(i, &q)| (q.distance(p), i))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        order.truncate(k);
        order
    }

    pub fn shortest_from_current(&self) -> ShortestPaths {
        dijkstra(&self.graph.weighted_adjacency(), self.current)
    }

    /// Cheapest route from the current vertex to `target`: to the nearest
    /// vertex within `snap` (the route ends there), else through a checked link to one of the
    /// `k_nn` nearest vertices.
    pub fn route_to(
        &self,
        grid: &OccupancyGrid<f64>,
        sp: &ShortestPaths,
        target: Vec3<f64>,
        snap: f64,
    ) -> Option<Route> {
        let near = self.nearest(target, self.k_nn);
        if let Some(&(_, v)) = near.iter().find(|&&(d, v)| d <= snap && sp.reachable(v)) {
            let path = sp.path_to(v)?;
            return Some(Route {
                waypoints: self.graph.polyline(&path),
                length: sp.dist[v],
            });
        }
        let mut best: Option<(f64, usize, Vec<Vec3<f64>>)> = None;
        for &(_, v) in &near {
            if !sp.reachable(v) {
                continue;
            }
            let Some(link) = connect(grid, self.mode(), self.graph.vertices[v], target, self.clearance) else {
                continue;
            };
            let total = sp.dist[v] + polyline_length(&link);
            if best.as_ref().is_none_or(|b| total < b.0) {
                best = Some((total, v, link));
            }
        }
        let (length, v, link) = best?;
        let mut waypoints = self.graph.polyline(&sp.path_to(v)?);
        waypoints.extend(link.into_iter().skip(1));
        Some(Route { waypoints, length })
    }

    /// Travel time at `v_nom` from the current vertex to each target, `+inf`
    /// where no route exists.
    pub fn times_to_keyframes(
        &self,
        grid: &OccupancyGrid<f64>,
        targets: &[Vec3<f64>],
        v_nom: f64,
        snap: f64,
    ) -> Vec<f64> {
        let sp = self.shortest_from_current();
        targets
            .iter()
            .map(|&t| {
                self.route_to(grid, &sp, t, snap)
                    .map_or(f64::INFINITY, |r| r.length / v_nom)
            })
            .collect()
    }
}
