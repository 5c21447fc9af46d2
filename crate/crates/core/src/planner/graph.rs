use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{PlanMode, PlannerError, PlannerParams};
use crate::geom::Vec3;
use crate::voxmap::{traverse, OccupancyGrid, Voxel, VoxelIndex};

/// An undirected edge with the polyline a robot follows from `a` to `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub length: f64,
    /// Waypoints from `a` to `b`, both endpoints included.
    pub waypoints: Vec<Vec3<f64>>,
}

/// Sampled roadmap rooted at vertex 0.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanGraph {
    pub mode: PlanMode,
    pub vertices: Vec<Vec3<f64>>,
    pub edges: Vec<Edge>,
    /// Per vertex: `(neighbor, edge index)`.
    pub adjacency: Vec<Vec<(usize, usize)>>,
}

impl PlanGraph {
    pub fn new(mode: PlanMode, root: Vec3<f64>) -> Self {
        Self {
            mode,
            vertices: vec![root],
            edges: Vec::new(),
            adjacency: vec![Vec::new()],
        }
    }

    /// Graph with explicit vertices and weighted edges (straight waypoints).
    pub fn from_parts(mode: PlanMode, vertices: Vec<Vec3<f64>>, edges: &[(usize, usize, f64)]) -> Self {
        let mut g = Self {
            mode,
            adjacency: vec![Vec::new(); vertices.len()],
            vertices,
            edges: Vec::new(),
        };
        for &(a, b, w) in edges {
            let wp = vec![g.vertices[a], g.vertices[b]];
            g.add_edge(a, b, w, wp);
        }
        g
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn add_vertex(&mut self, p: Vec3<f64>) -> usize {
        self.vertices.push(p);
        self.adjacency.push(Vec::new());
        self.vertices.len() - 1
    }

    pub fn add_edge(&mut self, a: usize, b: usize, length: f64, waypoints: Vec<Vec3<f64>>) {
        let idx = self.edges.len();
        self.edges.push(Edge {
            a,
            b,
            length,
            waypoints,
        });
        self.adjacency[a].push((b, idx));
        self.adjacency[b].push((a, idx));
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adjacency[a].iter().any(|&(n, _)| n == b)
    }

    pub fn weighted_adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        self.adjacency
            .iter()
            .map(|nbrs| nbrs.iter().map(|&(n, e)| (n, self.edges[e].length)).collect())
            .collect()
    }

    /// Polyline through the vertex sequence, following each edge's waypoints.
    pub fn polyline(&self, path: &[usize]) -> Vec<Vec3<f64>> {
        let mut out = Vec::new();
        if let Some(&first) = path.first() {
            out.push(self.vertices[first]);
        }
        for w in path.windows(2) {
            let (u, v) = (w[0], w[1]);
            let &(_, e) = self.adjacency[u]
                .iter()
                .filter(|&&(n, _)| n == v)
                .min_by(|x, y| self.edges[x.1].length.total_cmp(&self.edges[y.1].length))
                .expect("consecutive path vertices share an edge");
            let edge = &self.edges[e];
            if edge.a == u {
                out.extend(edge.waypoints.iter().skip(1).copied());
            } else {
                out.extend(edge.waypoints.iter().rev().skip(1).copied());
            }
        }
        out
    }

    /// Vertices `id,x,y,z,gain` and edges `a,b,length` as CSV text.
    pub fn to_csv(&self, gains: &[f64]) -> (String, String) {
        let mut v = String::from("id,x,y,z,gain\n");
        for (i, p) in self.vertices.iter().enumerate() {
            let g = gains.get(i).copied().unwrap_or(0.0);
            let _ = writeln!(v, "{i},{},{},{},{g}", p.x, p.y, p.z);
        }
        let mut e = String::from("a,b,length\n");
        for edge in &self.edges {
            let _ = writeln!(e, "{},{},{}", edge.a, edge.b, edge.length);
        }
        (v, e)
    }

    /// Keeps only the component containing vertex 0, preserving vertex order.
    pub fn prune_to_root(&mut self) {
        let mut keep = vec![false; self.len()];
        keep[0] = true;
        let mut stack = vec![0];
        while let Some(u) = stack.pop() {
            for &(n, _) in &self.adjacency[u] {
                if !keep[n] {
                    keep[n] = true;
                    stack.push(n);
                }
            }
        }
        if keep.iter().all(|&k| k) {
            return;
        }
        let mut remap = vec![usize::MAX; self.len()];
        let mut vertices = Vec::new();
        for (i, &k) in keep.iter().enumerate() {
            if k {
                remap[i] = vertices.len();
                vertices.push(self.vertices[i]);
            }
        }
        let old = std::mem::take(&mut self.edges);
        self.vertices = vertices;
        self.adjacency = vec![Vec::new(); self.vertices.len()];
        for e in old {
            if keep[e.a] {
                self.add_edge(remap[e.a], remap[e.b], e.length, e.waypoints);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapItem {
    dist: f64,
    vertex: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on (dist, vertex).
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortest-path tree from a source vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct ShortestPaths {
    pub source: usize,
    pub dist: Vec<f64>,
    pub parent: Vec<Option<usize>>,
}

impl ShortestPaths {
    pub fn reachable(&self, v: usize) -> bool {
        self.dist[v].is_finite()
    }

    /// Vertex sequence from the source to `v`, or `None` if unreachable.
    pub fn path_to(&self, v: usize) -> Option<Vec<usize>> {
        if !self.reachable(v) {
            return None;
        }
        let mut path = vec![v];
        let mut cur = v;
        while let Some(p) = self.parent[cur] {
            path.push(p);
            cur = p;
        }
        path.reverse();
        Some(path)
    }

    /// Number of edges on the tree path to `v`.
    pub fn hops(&self, v: usize) -> usize {
        let mut n = 0;
        let mut cur = v;
        while let Some(p) = self.parent[cur] {
            n += 1;
            cur = p;
        }
        n
    }
}

/// Dijkstra over a weighted adjacency list. Among equal-cost predecessors the
/// smaller vertex index wins.
pub fn dijkstra(adjacency: &[Vec<(usize, f64)>], source: usize) -> ShortestPaths {
    let n = adjacency.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut parent: Vec<Option<usize>> = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(HeapItem {
        dist: 0.0,
        vertex: source,
    });
    while let Some(HeapItem { dist: d, vertex: u }) = heap.pop() {
        if done[u] {
            continue;
        }
        done[u] = true;
        for &(v, w) in &adjacency[u] {
            let nd = d + w;
            let better = nd < dist[v] || (nd == dist[v] && !done[v] && parent[v].is_some_and(|p| u < p));
            if better {
                dist[v] = nd;
                parent[v] = Some(u);
                heap.push(HeapItem { dist: nd, vertex: v });
            }
        }
    }
    ShortestPaths {
        source,
        dist,
        parent,
    }
}

pub fn shortest_paths(graph: &PlanGraph) -> ShortestPaths {
    dijkstra(&graph.weighted_adjacency(), 0)
}

/// Whether a ground robot can stand in `v`: free, supported from below, with
/// `clearance` free voxels starting at `v`.
pub fn standable(grid: &OccupancyGrid<f64>, v: VoxelIndex, clearance: usize) -> bool {
    v[2] > 0
        && v[2] + clearance <= grid.dims()[2]
        && grid.get([v[0], v[1], v[2] - 1]) == Voxel::Occupied
        && (0..clearance).all(|k| grid.get([v[0], v[1], v[2] + k]) == Voxel::Free)
}

/// Drops from a free voxel to the first supported voxel below it.
pub fn project_down(grid: &OccupancyGrid<f64>, v: VoxelIndex, clearance: usize) -> Option<VoxelIndex> {
    let mut cur = v;
    loop {
        if grid.get(cur) != Voxel::Free {
            return None;
        }
        if cur[2] == 0 {
            return None;
        }
        let below = [cur[0], cur[1], cur[2] - 1];
        match grid.get(below) {
            Voxel::Occupied => return standable(grid, cur, clearance).then_some(cur),
            Voxel::Free => cur = below,
            Voxel::Unknown => return None,
        }
    }
}

/// Columns crossed by the xy segment between two column centers, in order
/// (face-connected, ties resolved x first).
fn column_walk(a: [usize; 2], b: [usize; 2]) -> Vec<[usize; 2]> {
    let (dx, dy) = (b[0] as i64 - a[0] as i64, b[1] as i64 - a[1] as i64);
    let (nx, ny) = (dx.unsigned_abs(), dy.unsigned_abs());
    let (sx, sy) = (dx.signum(), dy.signum());
    let mut out = vec![a];
    let (mut x, mut y) = (a[0] as i64, a[1] as i64);
    let (mut ix, mut iy) = (0u64, 0u64);
    while ix < nx || iy < ny {
        // Compare the next boundary crossings (ix+0.5)/nx vs (iy+0.5)/ny.
        let take_x = if ix >= nx {
            false
        } else if iy >= ny {
            true
        } else {
            (2 * ix + 1) * ny <= (2 * iy + 1) * nx
        };
        if take_x {
            x += sx;
            ix += 1;
        } else {
            y += sy;
            iy += 1;
        }
        out.push([x as usize, y as usize]);
    }
    out
}

/// Ground edge: walk the columns between two standable voxels with at most a
/// one-voxel height change per column. Returns the staircase waypoints.
pub fn ground_edge(
    grid: &OccupancyGrid<f64>,
    a: VoxelIndex,
    b: VoxelIndex,
    clearance: usize,
) -> Option<Vec<Vec3<f64>>> {
    let cols = column_walk([a[0], a[1]], [b[0], b[1]]);
    let mut z = a[2];
    let mut waypoints = vec![grid.voxel_center(a)];
    for w in cols.windows(2) {
        let (c0, c1) = (w[0], w[1]);
        let mut next = None;
        for dz in [0i64, 1, -1] {
            let nz = z as i64 + dz;
            if nz <= 0 {
                continue;
            }
            let v = [c1[0], c1[1], nz as usize];
            if !standable(grid, v, clearance) {
                continue;
            }
            // Headroom for the vertical move happens in the higher column.
            let head_ok = match dz {
                1 => grid
                    .checked_index([c0[0] as i64, c0[1] as i64, (z + clearance) as i64])
                    .is_some_and(|h| grid.get(h) == Voxel::Free),
                -1 => grid
                    .checked_index([c1[0] as i64, c1[1] as i64, (nz as usize + clearance) as i64])
                    .is_some_and(|h| grid.get(h) == Voxel::Free),
                _ => true,
            };
            if head_ok {
                next = Some(nz as usize);
                break;
            }
        }
        let nz = next?;
        if nz > z {
            waypoints.push(grid.voxel_center([c0[0], c0[1], nz]));
        } else if nz < z {
            waypoints.push(grid.voxel_center([c1[0], c1[1], z]));
        }
        waypoints.push(grid.voxel_center([c1[0], c1[1], nz]));
        z = nz;
    }
    (z == b[2]).then_some(waypoints)
}

/// Aerial edge: every voxel the segment crosses must be FREE.
pub fn aerial_edge_free(grid: &OccupancyGrid<f64>, a: Vec3<f64>, b: Vec3<f64>) -> bool {
    if grid.state_at(a) != Some(Voxel::Free) || grid.state_at(b) != Some(Voxel::Free) {
        return false;
    }
    let mut ok = true;
    let _ = traverse(grid, a, b, |st| {
        ok = grid.get(st.voxel) == Voxel::Free;
        ok
    });
    ok
}

pub fn polyline_length(points: &[Vec3<f64>]) -> f64 {
    points.windows(2).map(|w| w[0].distance(w[1])).sum()
}

/// Collision-checked connection between two points for the given mode.
pub fn connect(
    grid: &OccupancyGrid<f64>,
    mode: PlanMode,
    a: Vec3<f64>,
    b: Vec3<f64>,
    clearance: usize,
) -> Option<Vec<Vec3<f64>>> {
    match mode {
        PlanMode::Aerial3D => aerial_edge_free(grid, a, b).then(|| vec![a, b]),
        PlanMode::Ground2_5D => {
            let (va, vb) = (grid.voxel_of(a)?, grid.voxel_of(b)?);
            let mut wp = ground_edge(grid, va, vb, clearance)?;
            // Exact endpoints replace the voxel centers.
            wp[0] = a;
            *wp.last_mut().expect("non-empty") = b;
            Some(wp)
        }
    }
}

/// Samples the local roadmap around `root` (see [`PlannerParams`]).
pub fn build_local_graph(
    grid: &OccupancyGrid<f64>,
    root: Vec3<f64>,
    params: &PlannerParams,
    seed: u64,
) -> Result<PlanGraph, PlannerError> {
    if grid.state_at(root) != Some(Voxel::Free) {
        return Err(PlannerError::RobotInCollision(root.to_array()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut graph = PlanGraph::new(params.mode, root);
    let mut used: Vec<usize> = vec![grid.linear(grid.voxel_of(root).expect("checked"))];
    let h = params.local_half_extent;
    let attempts = params.max_vertices * params.attempts_per_vertex;
    for _ in 0..attempts {
        if graph.len() >= params.max_vertices {
            break;
        }
        let p = Vec3::new(
            root.x + rng.random_range(-h[0]..h[0]),
            root.y + rng.random_range(-h[1]..h[1]),
            root.z + rng.random_range(-h[2]..h[2]),
        );
        let Some(v) = grid.voxel_of(p) else {
            continue;
        };
        if grid.get(v) != Voxel::Free {
            continue;
        }
        let (pos, voxel) = match params.mode {
            PlanMode::Aerial3D => (p, v),
            PlanMode::Ground2_5D => match project_down(grid, v, params.ground_clearance) {
                Some(g) => (grid.voxel_center(g), g),
                None => continue,
            },
        };
        let lin = grid.linear(voxel);
        if params.mode == PlanMode::Ground2_5D && used.contains(&lin) {
            continue;
        }
        used.push(lin);
        graph.add_vertex(pos);
    }
    connect_knn(grid, &mut graph, params);
    graph.prune_to_root();
    Ok(graph)
}

fn connect_knn(grid: &OccupancyGrid<f64>, graph: &mut PlanGraph, params: &PlannerParams) {
    let n = graph.len();
    for i in 0..n {
        let mut order: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (graph.vertices[i].distance(graph.vertices[j]), j))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, j) in order.iter().take(params.k_nn) {
            if graph.has_edge(i, j) {
                continue;
            }
            let (a, b) = (i.min(j), i.max(j));
            let (pa, pb) = (graph.vertices[a], graph.vertices[b]);
            if let Some(wp) = connect(grid, params.mode, pa, pb, params.ground_clearance) {
                let len = polyline_length(&wp);
                graph.add_edge(a, b, len, wp);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle_prefers_two_hops() {
        let g = PlanGraph::from_parts(
            PlanMode::Aerial3D,
            vec![Vec3::zero(); 3],
            &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 3.0)],
        );
        let sp = shortest_paths(&g);
        assert_eq!(sp.dist[2], 2.0);
        assert_eq!(sp.path_to(2).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn single_vertex_has_empty_path() {
        let g = PlanGraph::new(PlanMode::Aerial3D, Vec3::zero());
        let sp = shortest_paths(&g);
        assert_eq!(sp.path_to(0).unwrap(), vec![0]);
        assert_eq!(sp.hops(0), 0);
    }

    #[test]
    fn equal_cost_ties_pick_smaller_parent() {
        let g = PlanGraph::from_parts(
            PlanMode::Aerial3D,
            vec![Vec3::zero(); 4],
            &[(0, 2, 1.0), (0, 1, 1.0), (2, 3, 1.0), (1, 3, 1.0)],
        );
        assert_eq!(shortest_paths(&g).parent[3], Some(1));
    }

    #[test]
    fn column_walk_is_face_connected() {
        for (a, b) in [([0, 0], [5, 3]), ([4, 1], [0, 6]), ([2, 2], [2, 7]), ([3, 3], [3, 3])] {
            let w = column_walk(a, b);
            assert_eq!(w[0], a);
            assert_eq!(*w.last().unwrap(), b);
            for p in w.windows(2) {
                let d = p[0][0].abs_diff(p[1][0]) + p[0][1].abs_diff(p[1][1]);
                assert_eq!(d, 1);
            }
        }
    }
}
