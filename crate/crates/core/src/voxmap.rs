//! Three-state occupancy grid with ray-cast integration, merging and metrics.

use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use crate::geom::{Pose, Vec3};
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VoxError {
    #[error("ray origin lies outside the grid")]
    OriginOutOfBounds,
    #[error("grids have different voxel sizes")]
    ResolutionMismatch,
    #[error("grids have different origins or dimensions")]
    ExtentMismatch,
    #[error("invalid grid: {0}")]
    InvalidGrid(&'static str),
    #[error("grid file parse error: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Voxel {
    Free = 0,
    Occupied = 1,
    Unknown = 2,
}

impl Voxel {
    pub fn symbol(self) -> char {
        match self {
            Voxel::Free => '.',
            Voxel::Occupied => '#',
            Voxel::Unknown => '?',
        }
    }

    pub fn from_symbol(c: char) -> Option<Self> {
        match c {
            '.' => Some(Voxel::Free),
            '#' => Some(Voxel::Occupied),
            '?' => Some(Voxel::Unknown),
            _ => None,
        }
    }

    pub fn is_known(self) -> bool {
        self != Voxel::Unknown
    }
}

/// Integer voxel coordinate.
pub type VoxelIndex = [usize; 3];

/// Dense fixed-extent grid; cell `(i, j, k)` spans
/// `origin + [i, i+1) × s` (and likewise in y, z).
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid<T> {
    origin: Vec3<T>,
    dims: [usize; 3],
    resolution: T,
    cells: Vec<Voxel>,
}

impl<T: Real> OccupancyGrid<T> {
    /// All-unknown grid.
    pub fn new(origin: Vec3<T>, dims: [usize; 3], resolution: T) -> Result<Self, VoxError> {
        Self::filled(origin, dims, resolution, Voxel::Unknown)
    }

    pub fn filled(
        origin: Vec3<T>,
        dims: [usize; 3],
        resolution: T,
        state: Voxel,
    ) -> Result<Self, VoxError> {
        if dims.contains(&0) {
            return Err(VoxError::InvalidGrid("all dimensions must be >= 1"));
        }
        if !(resolution > T::zero()) || !resolution.is_finite() {
            return Err(VoxError::InvalidGrid("voxel size must be positive"));
        }
        if !origin.is_finite() {
            return Err(VoxError::InvalidGrid("origin must be finite"));
        }
        Ok(Self {
            origin,
            dims,
            resolution,
            cells: vec![state; dims[0] * dims[1] * dims[2]],
        })
    }

    /// Empty grid with the same extent and resolution.
    pub fn blank_like(&self) -> Self {
        Self {
            origin: self.origin,
            dims: self.dims,
            resolution: self.resolution,
            cells: vec![Voxel::Unknown; self.cells.len()],
        }
    }

    pub fn origin(&self) -> Vec3<T> {
        self.origin
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn resolution(&self) -> T {
        self.resolution
    }

    pub fn cells(&self) -> &[Voxel] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    #[inline]
    pub fn linear(&self, v: VoxelIndex) -> usize {
        v[0] + self.dims[0] * (v[1] + self.dims[1] * v[2])
    }

    #[inline]
    pub fn unlinear(&self, i: usize) -> VoxelIndex {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [i % nx, (i / nx) % ny, i / (nx * ny)]
    }

    #[inline]
    pub fn get(&self, v: VoxelIndex) -> Voxel {
        self.cells[self.linear(v)]
    }

    /// State at a signed index; out-of-bounds reads as `None`.
    #[inline]
    pub fn get_signed(&self, v: [i64; 3]) -> Option<Voxel> {
        self.checked_index(v).map(|v| self.get(v))
    }

    #[inline]
    pub fn set(&mut self, v: VoxelIndex, state: Voxel) {
        let i = self.linear(v);
        self.cells[i] = state;
    }

    #[inline]
    pub fn checked_index(&self, v: [i64; 3]) -> Option<VoxelIndex> {
        let mut out = [0usize; 3];
        for a in 0..3 {
            if v[a] < 0 || v[a] as usize >= self.dims[a] {
                return None;
            }
            out[a] = v[a] as usize;
        }
        Some(out)
    }

    /// Signed (possibly out-of-bounds) voxel coordinate containing `p`.
    #[inline]
    pub fn signed_voxel_of(&self, p: Vec3<T>) -> [i64; 3] {
        let rel = (p - self.origin) * (T::one() / self.resolution);
        [
            rel.x.floor().to_i64().unwrap_or(i64::MIN),
            rel.y.floor().to_i64().unwrap_or(i64::MIN),
            rel.z.floor().to_i64().unwrap_or(i64::MIN),
        ]
    }

    pub fn voxel_of(&self, p: Vec3<T>) -> Option<VoxelIndex> {
        self.checked_index(self.signed_voxel_of(p))
    }

    pub fn voxel_center(&self, v: VoxelIndex) -> Vec3<T> {
        let half = T::lit(0.5);
        self.origin
            + Vec3::new(
                T::from_usize_lossy(v[0]) + half,
                T::from_usize_lossy(v[1]) + half,
                T::from_usize_lossy(v[2]) + half,
            ) * self.resolution
    }

    pub fn contains(&self, p: Vec3<T>) -> bool {
        self.voxel_of(p).is_some()
    }

    pub fn state_at(&self, p: Vec3<T>) -> Option<Voxel> {
        self.voxel_of(p).map(|v| self.get(v))
    }

    pub fn count(&self, state: Voxel) -> usize {
        self.cells.iter().filter(|&&c| c == state).count()
    }

    pub fn occupied_voxels(&self) -> Vec<VoxelIndex> {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == Voxel::Occupied)
            .map(|(i, _)| self.unlinear(i))
            .collect()
    }

    fn same_resolution(&self, other: &Self) -> bool {
        let a = self.resolution.as_f64();
        let b = other.resolution.as_f64();
        (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
    }

    /// Serializes to the `VOX1` text format.
    pub fn to_vox_string(&self) -> String {
        let [nx, ny, nz] = self.dims;
        let mut s = String::with_capacity(self.cells.len() + ny * nz + 64);
        let _ = writeln!(
            s,
            "VOX1 {nx} {ny} {nz} {} {} {} {}",
            self.resolution.as_f64(),
            self.origin.x.as_f64(),
            self.origin.y.as_f64(),
            self.origin.z.as_f64()
        );
        for row in self.cells.chunks(nx) {
            s.extend(row.iter().map(|c| c.symbol()));
            s.push('\n');
        }
        s
    }

    /// Parses the `VOX1` text format. Blank lines between rows are ignored.
    pub fn from_vox_str(text: &str) -> Result<Self, VoxError> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| VoxError::Parse("empty file".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 8 || fields[0] != "VOX1" {
            return Err(VoxError::Parse(format!("bad header: {header:?}")));
        }
        fn num<U: FromStr>(s: &str) -> Result<U, VoxError> {
            s.parse()
                .map_err(|_| VoxError::Parse(format!("bad number {s:?}")))
        }
        let dims = [num(fields[1])?, num(fields[2])?, num(fields[3])?];
        let res: f64 = num(fields[4])?;
        let origin = Vec3::new(
            T::lit(num(fields[5])?),
            T::lit(num(fields[6])?),
            T::lit(num(fields[7])?),
        );
        let mut grid = Self::new(origin, dims, T::lit(res))?;
        let mut filled = 0usize;
        for line in lines.map(str::trim_end).filter(|l| !l.is_empty()) {
            if line.chars().count() != dims[0] {
                return Err(VoxError::Parse(format!(
                    "row {} has {} cells, expected {}",
                    filled / dims[0],
                    line.chars().count(),
                    dims[0]
                )));
            }
            for c in line.chars() {
                if filled >= grid.cells.len() {
                    return Err(VoxError::Parse("too many rows".into()));
                }
                grid.cells[filled] = Voxel::from_symbol(c)
                    .ok_or_else(|| VoxError::Parse(format!("bad cell symbol {c:?}")))?;
                filled += 1;
            }
        }
        if filled != grid.cells.len() {
            return Err(VoxError::Parse(format!(
                "expected {} cells, found {filled}",
                grid.cells.len()
            )));
        }
        Ok(grid)
    }
}

/// One traversed voxel and the ray parameter at which the ray enters it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayStep<T> {
    pub voxel: VoxelIndex,
    pub t_entry: T,
}

/// Amanatides–Woo traversal from `origin` towards `endpoint`, calling `visit` for
/// every voxel in order. `t_entry` is the fraction of the segment at which each voxel
/// is entered (0 for the origin voxel). Stops at the endpoint voxel, when leaving the
/// grid, or when `visit` returns `false`.
pub fn traverse<T: Real, F>(
    grid: &OccupancyGrid<T>,
    origin: Vec3<T>,
    endpoint: Vec3<T>,
    mut visit: F,
) -> Result<(), VoxError>
where
    F: FnMut(RayStep<T>) -> bool,
{
    let start = grid
        .voxel_of(origin)
        .ok_or(VoxError::OriginOutOfBounds)?;
    let end = grid.signed_voxel_of(endpoint);
    let dir = endpoint - origin;
    let s = grid.resolution;
    let mut cur = [start[0] as i64, start[1] as i64, start[2] as i64];
    let mut step = [0i64; 3];
    let mut t_max = [T::infinity(); 3];
    let mut t_delta = [T::infinity(); 3];
    for a in 0..3 {
        let d = dir.component(a);
        if d > T::zero() {
            step[a] = 1;
            let boundary = grid.origin.component(a) + T::from_usize_lossy(start[a] + 1) * s;
            t_max[a] = (boundary - origin.component(a)) / d;
            t_delta[a] = s / d;
        } else if d < T::zero() {
            step[a] = -1;
            let boundary = grid.origin.component(a) + T::from_usize_lossy(start[a]) * s;
            t_max[a] = (boundary - origin.component(a)) / d;
            t_delta[a] = -s / d;
        }
    }
    let mut t_entry = T::zero();
    loop {
        let voxel = [cur[0] as usize, cur[1] as usize, cur[2] as usize];
        if !visit(RayStep { voxel, t_entry }) || cur == end {
            return Ok(());
        }
        let mut axis = 0;
        for a in 1..3 {
            if t_max[a] < t_max[axis] {
                axis = a;
            }
        }
        if t_max[axis] > T::one() {
            return Ok(());
        }
        t_entry = t_max[axis];
        cur[axis] += step[axis];
        if cur[axis] < 0 || cur[axis] as usize >= grid.dims[axis] {
            return Ok(());
        }
        t_max[axis] += t_delta[axis];
    }
}

/// Ordered, face-connected voxels crossed by the segment `origin → endpoint`.
pub fn raycast<T: Real>(
    grid: &OccupancyGrid<T>,
    origin: Vec3<T>,
    endpoint: Vec3<T>,
) -> Result<Vec<VoxelIndex>, VoxError> {
    let mut out = Vec::new();
    traverse(grid, origin, endpoint, |st| {
        out.push(st.voxel);
        true
    })?;
    Ok(out)
}

/// Fraction of a voxel by which returns are pushed away from the sensor, so a
/// return lying exactly on a voxel face belongs to the voxel behind that face.
const SURFACE_NUDGE: f64 = 1e-4;

/// Integrates a sensor-frame cloud: traversed voxels become FREE unless OCCUPIED,
/// endpoint voxels become OCCUPIED. Endpoints outside the grid mark only free space.
pub fn integrate_cloud<T: Real>(
    grid: &mut OccupancyGrid<T>,
    sensor_pose: &Pose<T>,
    cloud: &[Vec3<T>],
) -> Result<(), VoxError> {
    let origin = sensor_pose.position;
    if !grid.contains(origin) {
        return Err(VoxError::OriginOutOfBounds);
    }
    let mut path = Vec::new();
    for &p in cloud {
        let mut world = sensor_pose.transform_point(p);
        let ray = world - origin;
        let len = ray.norm();
        if len > T::zero() {
            world += ray * (grid.resolution * T::lit(SURFACE_NUDGE) / len);
        }
        path.clear();
        traverse(grid, origin, world, |st| {
            path.push(st.voxel);
            true
        })?;
        let hit = grid.voxel_of(world);
        for &v in &path {
            let i = grid.linear(v);
            if Some(v) != hit && grid.cells[i] != Voxel::Occupied {
                grid.cells[i] = Voxel::Free;
            }
        }
        if let Some(v) = hit {
            grid.set(v, Voxel::Occupied);
        }
    }
    Ok(())
}

/// Volume of known (free or occupied) space in cubic meters.
pub fn explored_volume<T: Real>(grid: &OccupancyGrid<T>) -> f64 {
    let known = grid.cells.iter().filter(|c| c.is_known()).count();
    known as f64 * grid.resolution.as_f64().powi(3)
}

/// Per-voxel union: OCCUPIED beats FREE beats UNKNOWN.
pub fn merge<T: Real>(
    a: &OccupancyGrid<T>,
    b: &OccupancyGrid<T>,
) -> Result<OccupancyGrid<T>, VoxError> {
    if !a.same_resolution(b) {
        return Err(VoxError::ResolutionMismatch);
    }
    if a.origin != b.origin || a.dims != b.dims {
        return Err(VoxError::ExtentMismatch);
    }
    let mut out = a.clone();
    for (o, &bv) in out.cells.iter_mut().zip(&b.cells) {
        *o = merge_state(*o, bv);
    }
    Ok(out)
}

#[inline]
pub fn merge_state(a: Voxel, b: Voxel) -> Voxel {
    if a == Voxel::Occupied || b == Voxel::Occupied {
        Voxel::Occupied
    } else if a == Voxel::Free || b == Voxel::Free {
        Voxel::Free
    } else {
        Voxel::Unknown
    }
}

/// Symmetric F1 score over occupied voxels: a voxel counts as matched when the
/// other map has an occupied voxel center within one voxel size of its own center.
pub fn occupancy_similarity<T: Real>(
    a: &OccupancyGrid<T>,
    b: &OccupancyGrid<T>,
) -> Result<f64, VoxError> {
    if !a.same_resolution(b) {
        return Err(VoxError::ResolutionMismatch);
    }
    let occ_a = a.occupied_voxels();
    let occ_b = b.occupied_voxels();
    match (occ_a.is_empty(), occ_b.is_empty()) {
        (true, true) => return Ok(1.0),
        (true, false) | (false, true) => return Ok(0.0),
        _ => {}
    }
    let precision = matched_fraction(b, &occ_b, a);
    let recall = matched_fraction(a, &occ_a, b);
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * precision * recall / (precision + recall))
}

/// Fraction of `query` voxels (of grid `qg`) with an occupied voxel of `target`
/// within one voxel size.
fn matched_fraction<T: Real>(
    qg: &OccupancyGrid<T>,
    query: &[VoxelIndex],
    target: &OccupancyGrid<T>,
) -> f64 {
    let s = target.resolution.as_f64();
    let radius2 = s * s * (1.0 + 1e-9);
    let matched = query
        .iter()
        .filter(|&&v| {
            let c = qg.voxel_center(v);
            let base = target.signed_voxel_of(c);
            for dz in -2..=2i64 {
                for dy in -2..=2i64 {
                    for dx in -2..=2i64 {
                        let n = [base[0] + dx, base[1] + dy, base[2] + dz];
                        if let Some(idx) = target.checked_index(n) {
                            if target.get(idx) == Voxel::Occupied {
                                let d2 = (target.voxel_center(idx) - c).norm_squared().as_f64();
                                if d2 <= radius2 {
                                    return true;
                                }
                            }
                        }
                    }
                }
            }
            false
        })
        .count();
    matched as f64 / query.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> OccupancyGrid<f64> {
        OccupancyGrid::new(Vec3::zero(), [n, n, n], 1.0).unwrap()
    }

    #[test]
    fn same_voxel_ray_has_one_step() {
        let g = grid(4);
        let r = raycast(&g, Vec3::new(1.2, 1.2, 1.2), Vec3::new(1.8, 1.1, 1.7)).unwrap();
        assert_eq!(r, vec![[1, 1, 1]]);
    }

    #[test]
    fn axis_ray_spans_k_plus_one_voxels() {
        let g = grid(10);
        let r = raycast(&g, Vec3::new(0.5, 2.5, 2.5), Vec3::new(5.5, 2.5, 2.5)).unwrap();
        let expect: Vec<_> = (0..=5).map(|i| [i, 2, 2]).collect();
        assert_eq!(r, expect);
    }

    #[test]
    fn negative_direction_ray() {
        let g = grid(10);
        let r = raycast(&g, Vec3::new(5.5, 2.5, 2.5), Vec3::new(2.5, 2.5, 2.5)).unwrap();
        assert_eq!(r, vec![[5, 2, 2], [4, 2, 2], [3, 2, 2], [2, 2, 2]]);
    }

    #[test]
    fn ray_leaving_grid_stops_at_last_inside_voxel() {
        let g = grid(4);
        let r = raycast(&g, Vec3::new(0.5, 0.5, 0.5), Vec3::new(10.5, 0.5, 0.5)).unwrap();
        assert_eq!(r.last(), Some(&[3, 0, 0]));
        assert_eq!(r.len(), 4);
    }

    #[test]
    fn origin_outside_is_an_error() {
        let g = grid(4);
        assert_eq!(
            raycast(&g, Vec3::new(-0.5, 0.5, 0.5), Vec3::new(1.0, 1.0, 1.0)),
            Err(VoxError::OriginOutOfBounds)
        );
    }

    #[test]
    fn integrate_single_axis_point() {
        let mut g = grid(10);
        let pose = Pose::from_translation(Vec3::new(0.5, 4.5, 4.5));
        integrate_cloud(&mut g, &pose, &[Vec3::new(5.0, 0.0, 0.0)]).unwrap();
        for i in 0..5 {
            assert_eq!(g.get([i, 4, 4]), Voxel::Free);
        }
        assert_eq!(g.get([5, 4, 4]), Voxel::Occupied);
        assert_eq!(g.count(Voxel::Free), 5);
        assert_eq!(g.count(Voxel::Occupied), 1);
    }

    #[test]
    fn integrate_empty_cloud_is_noop() {
        let mut g = grid(4);
        let before = g.clone();
        integrate_cloud(&mut g, &Pose::from_translation(Vec3::splat(1.5)), &[]).unwrap();
        assert_eq!(g, before);
    }

    #[test]
    fn integrate_rejects_outside_sensor() {
        let mut g = grid(4);
        let pose = Pose::from_translation(Vec3::splat(-1.0));
        assert_eq!(
            integrate_cloud(&mut g, &pose, &[Vec3::new(1.0, 0.0, 0.0)]),
            Err(VoxError::OriginOutOfBounds)
        );
    }

    #[test]
    fn occupied_beats_free_in_either_order() {
        // Ray A ends at (3,4,4); ray B passes through it towards (7,4,4).
        let pose = Pose::from_translation(Vec3::new(0.5, 4.5, 4.5));
        let a = Vec3::new(3.0, 0.0, 0.0);
        let b = Vec3::new(7.0, 0.0, 0.0);
        let mut g1 = grid(10);
        integrate_cloud(&mut g1, &pose, &[a, b]).unwrap();
        let mut g2 = grid(10);
        integrate_cloud(&mut g2, &pose, &[b, a]).unwrap();
        let mut g3 = grid(10);
        integrate_cloud(&mut g3, &pose, &[b]).unwrap();
        integrate_cloud(&mut g3, &pose, &[a]).unwrap();
        for g in [&g1, &g2, &g3] {
            assert_eq!(g.get([3, 4, 4]), Voxel::Occupied);
            assert_eq!(g.get([7, 4, 4]), Voxel::Occupied);
        }
        assert_eq!(g1, g2);
        assert_eq!(g1, g3);
    }

    #[test]
    fn explored_volume_arithmetic() {
        let mut g = OccupancyGrid::new(Vec3::zero(), [10, 10, 10], 0.2).unwrap();
        assert_eq!(explored_volume(&g), 0.0);
        for i in 0..10 {
            g.set([i, 0, 0], if i % 2 == 0 { Voxel::Free } else { Voxel::Occupied });
        }
        assert!((explored_volume(&g) - 0.08).abs() < 1e-12);
    }

    #[test]
    fn merge_precedence_table() {
        let states = [Voxel::Free, Voxel::Occupied, Voxel::Unknown];
        let mut a = OccupancyGrid::new(Vec3::zero(), [3, 3, 1], 1.0).unwrap();
        let mut b = a.clone();
        for (i, &sa) in states.iter().enumerate() {
            for (j, &sb) in states.iter().enumerate() {
                a.set([i, j, 0], sa);
                b.set([i, j, 0], sb);
            }
        }
        let m = merge(&a, &b).unwrap();
        for (i, &sa) in states.iter().enumerate() {
            for (j, &sb) in states.iter().enumerate() {
                let expect = if sa == Voxel::Occupied || sb == Voxel::Occupied {
                    Voxel::Occupied
                } else if sa == Voxel::Free || sb == Voxel::Free {
                    Voxel::Free
                } else {
                    Voxel::Unknown
                };
                assert_eq!(m.get([i, j, 0]), expect, "{sa:?} + {sb:?}");
            }
        }
        assert_eq!(m, merge(&b, &a).unwrap());
        assert_eq!(merge(&a, &a).unwrap(), a);
        assert_eq!(merge(&a, &a.blank_like()).unwrap(), a);
    }

    #[test]
    fn merge_rejects_mismatch() {
        let a = grid(3);
        let b = OccupancyGrid::new(Vec3::zero(), [3, 3, 3], 0.5).unwrap();
        assert_eq!(merge(&a, &b), Err(VoxError::ResolutionMismatch));
        let c = OccupancyGrid::new(Vec3::splat(1.0), [3, 3, 3], 1.0).unwrap();
        assert_eq!(merge(&a, &c), Err(VoxError::ExtentMismatch));
        let d = grid(4);
        assert_eq!(merge(&a, &d), Err(VoxError::ExtentMismatch));
    }

    #[test]
    fn similarity_edge_cases() {
        let mut a = grid(6);
        let empty = grid(6);
        assert_eq!(occupancy_similarity(&empty, &empty).unwrap(), 1.0);
        a.set([2, 2, 2], Voxel::Occupied);
        a.set([3, 2, 2], Voxel::Occupied);
        assert_eq!(occupancy_similarity(&a, &a).unwrap(), 1.0);
        assert_eq!(occupancy_similarity(&a, &empty).unwrap(), 0.0);
        assert_eq!(occupancy_similarity(&empty, &a).unwrap(), 0.0);
        let far = {
            let mut g = grid(6);
            g.set([5, 5, 5], Voxel::Occupied);
            g
        };
        assert_eq!(occupancy_similarity(&a, &far).unwrap(), 0.0);
        let other = OccupancyGrid::new(Vec3::zero(), [6, 6, 6], 0.5).unwrap();
        assert_eq!(
            occupancy_similarity(&a, &other),
            Err(VoxError::ResolutionMismatch)
        );
    }

    #[test]
    fn vox_file_round_trip() {
        let mut g = OccupancyGrid::new(Vec3::new(-1.25, 0.1, 3.0), [3, 2, 2], 0.2).unwrap();
        g.set([0, 0, 0], Voxel::Free);
        g.set([2, 1, 1], Voxel::Occupied);
        let text = g.to_vox_string();
        assert!(text.starts_with("VOX1 3 2 2 0.2 -1.25 0.1 3\n"));
        let back = OccupancyGrid::<f64>::from_vox_str(&text).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn vox_parse_errors() {
        assert!(OccupancyGrid::<f64>::from_vox_str("").is_err());
        assert!(OccupancyGrid::<f64>::from_vox_str("VOX2 1 1 1 1 0 0 0\n.\n").is_err());
        assert!(OccupancyGrid::<f64>::from_vox_str("VOX1 2 1 1 1 0 0 0\n.\n").is_err());
        assert!(OccupancyGrid::<f64>::from_vox_str("VOX1 1 1 1 1 0 0 0\nx\n").is_err());
        assert!(OccupancyGrid::<f64>::from_vox_str("VOX1 1 1 1 1 0 0 0\n.\n.\n").is_err());
    }
}
