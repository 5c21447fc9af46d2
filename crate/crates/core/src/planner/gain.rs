use super::graph::{PlanGraph, ShortestPaths};
use crate::geom::{LidarIntrinsics, Vec3};
use crate::voxmap::{traverse, OccupancyGrid, Voxel};

/// Vertex sequence from the root with its length and discounted gain.
#[derive(Debug, Clone, PartialEq)]
pub struct GainedPath {
    pub path: Vec<usize>,
    pub length: f64,
    pub gain: f64,
}

/// Counts UNKNOWN voxels within sensor range and vertical field of view of
/// `vertex` whose centers are reachable by a ray crossing no OCCUPIED voxel.
pub fn volumetric_gain(grid: &OccupancyGrid<f64>, vertex: Vec3<f64>, sensor: &LidarIntrinsics<f64>) -> usize {
    let Some(origin) = grid.voxel_of(vertex) else {
        return 0;
    };
    let s = grid.resolution();
    let r = sensor.max_range;
    let reach = (r / s).ceil() as i64 + 1;
    let dims = grid.dims();
    let lo = |a: usize| (origin[a] as i64 - reach).max(0) as usize;
    let hi = |a: usize| ((origin[a] as i64 + reach) as usize).min(dims[a] - 1);
    let r2 = r * r;
    let mut count = 0;
    for z in lo(2)..=hi(2) {
        for y in lo(1)..=hi(1) {
            for x in lo(0)..=hi(0) {
                let v = [x, y, z];
                if grid.get(v) != Voxel::Unknown {
                    continue;
                }
                let c = grid.voxel_center(v);
                let d = c - vertex;
                if d.norm_squared() > r2 {
                    continue;
                }
                let elev = d.z.atan2((d.x * d.x + d.y * d.y).sqrt());
                if elev < sensor.min_elevation || elev > sensor.max_elevation {
                    continue;
                }
                if visible(grid, vertex, v) {
                    count += 1;
                }
            }
        }
    }
    count
}

fn visible(grid: &OccupancyGrid<f64>, from: Vec3<f64>, target: [usize; 3]) -> bool {
    let mut reached = false;
    let _ = traverse(grid, from, grid.voxel_center(target), |st| {
        if st.voxel == target {
            reached = true;
            return false;
        }
        grid.get(st.voxel) != Voxel::Occupied
    });
    reached
}

/// Gain of every vertex, as `f64` for the path objective.
pub fn vertex_gains(grid: &OccupancyGrid<f64>, graph: &PlanGraph, sensor: &LidarIntrinsics<f64>) -> Vec<f64> {
    graph
        .vertices
        .iter()
        .map(|&p| volumetric_gain(grid, p, sensor) as f64)
        .collect()
}

/// Discounted path gain `sum gain(v) * exp(-lambda * D(v))` along a vertex sequence.
pub fn path_gain(sp: &ShortestPaths, gains: &[f64], lambda: f64, path: &[usize]) -> f64 {
    path.iter().map(|&v| gains[v] * (-lambda * sp.dist[v]).exp()).sum()
}

/// Best shortest-path-tree path: maximal discounted gain, then shorter, then
/// smaller leaf index.
pub fn best_path_and_gain(sp: &ShortestPaths, gains: &[f64], lambda: f64) -> GainedPath {
    let n = gains.len();
    let mut order: Vec<usize> = (0..n).filter(|&v| sp.reachable(v)).collect();
    // Parents settle before children when sorted by distance then hop count.
    order.sort_by(|&a, &b| sp.dist[a].total_cmp(&sp.dist[b]).then(sp.hops(a).cmp(&sp.hops(b))));
    let mut phi = vec![0.0; n];
    for &v in &order {
        let own = gains[v] * (-lambda * sp.dist[v]).exp();
        phi[v] = own + sp.parent[v].map_or(0.0, |p| phi[p]);
    }
    let mut best = sp.source;
    for v in 0..n {
        if !sp.reachable(v) {
            continue;
        }
        let better = phi[v] > phi[best]
            || (phi[v] == phi[best]
                && (sp.dist[v] < sp.dist[best] || (sp.dist[v] == sp.dist[best] && v < best)));
        if better {
            best = v;
        }
    }
    GainedPath {
        path: sp.path_to(best).expect("reachable"),
        length: sp.dist[best],
        gain: phi[best],
    }
}

/// Vertex with the highest raw gain (ties to the smaller index).
pub fn best_vertex_and_gain(gains: &[f64]) -> (usize, f64) {
    let mut best = (0, gains.first().copied().unwrap_or(0.0));
    for (i, &g) in gains.iter().enumerate().skip(1) {
        if g > best.1 {
            best = (i, g);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::graph::shortest_paths;
    use crate::planner::PlanMode;

    #[test]
    fn zero_gains_pick_root() {
        let g = PlanGraph::from_parts(
            PlanMode::Aerial3D,
            vec![Vec3::zero(); 3],
            &[(0, 1, 1.0), (1, 2, 1.0)],
        );
        let best = best_path_and_gain(&shortest_paths(&g), &[0.0; 3], 0.25);
        assert_eq!(best.path, vec![0]);
        assert_eq!(best.gain, 0.0);
        assert_eq!(best.length, 0.0);
    }

    #[test]
    fn undiscounted_gain_is_plain_sum() {
        let g = PlanGraph::from_parts(
            PlanMode::Aerial3D,
            vec![Vec3::zero(); 3],
            &[(0, 1, 1.0), (1, 2, 2.0)],
        );
        let best = best_path_and_gain(&shortest_paths(&g), &[1.0, 2.0, 3.0], 0.0);
        assert_eq!(best.path, vec![0, 1, 2]);
        assert_eq!(best.gain, 6.0);
    }

    #[test]
    fn known_grid_has_no_gain() {
        let grid = OccupancyGrid::filled(Vec3::zero(), [8, 8, 8], 0.5, Voxel::Free).unwrap();
        let intr = LidarIntrinsics::symmetric_deg(8, 8, 45.0, 3.0);
        assert_eq!(volumetric_gain(&grid, Vec3::splat(2.0), &intr), 0);
    }
}
