//! Ground-truth worlds: the multi-level room generator, file format and
//! structural queries.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::MissionError;
use crate::geom::{Pose, Vec3};
use crate::voxmap::{OccupancyGrid, VoxError, Voxel, VoxelIndex};

/// Layout parameters for [`generate_world`], in voxels unless noted.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldSpec {
    pub rooms: usize,
    pub levels: usize,
    pub resolution: f64,
    /// Interior room extent range along x and y.
    pub room_min: usize,
    pub room_max: usize,
    /// Interior height of each level.
    pub level_height: usize,
    pub door_width: usize,
    pub door_height: usize,
    pub shaft_size: usize,
    pub pillars_per_room: usize,
}

impl Default for WorldSpec {
    fn default() -> Self {
        Self {
            rooms: 4,
            levels: 2,
            resolution: 0.4,
            room_min: 10,
            room_max: 14,
            level_height: 7,
            door_width: 2,
            door_height: 5,
            shaft_size: 3,
            pillars_per_room: 1,
        }
    }
}

impl WorldSpec {
    pub fn validate(&self) -> Result<(), MissionError> {
        let bad = |m: &str| Err(MissionError::ConfigInvalid(m.to_string()));
        if self.rooms == 0 || self.levels == 0 {
            return bad("world needs at least one room and one level");
        }
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return bad("world resolution must be positive");
        }
        if self.room_min < 8 || self.room_max < self.room_min {
            return bad("room size range must satisfy 8 <= min <= max");
        }
        if self.level_height < 4 || self.door_height + 1 > self.level_height {
            return bad("level height must be at least 4 and exceed the door height");
        }
        if self.door_width == 0 || self.door_width + 2 > self.room_min {
            return bad("door width must fit inside the smallest room");
        }
        if self.shaft_size == 0 || self.shaft_size + 7 > self.room_min {
            return bad("shaft must fit inside the smallest room");
        }
        Ok(())
    }
}

/// Ground truth (FREE/OCCUPIED only), start pose and named markers.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub grid: OccupancyGrid<f64>,
    pub start: Pose<f64>,
    pub markers: Vec<(String, Vec3<f64>)>,
}

impl World {
    pub fn resolution(&self) -> f64 {
        self.grid.resolution()
    }

    /// `VOX1` grid followed by `@start x y z yaw` and `@mark name x y z` lines.
    pub fn to_file_string(&self) -> String {
        let mut s = self.grid.to_vox_string();
        let p = self.start.position;
        let _ = writeln!(s, "@start {} {} {} {}", p.x, p.y, p.z, self.start.orientation.yaw());
        for (name, m) in &self.markers {
            let _ = writeln!(s, "@mark {name} {} {} {}", m.x, m.y, m.z);
        }
        s
    }

    pub fn from_file_str(text: &str) -> Result<Self, MissionError> {
        let mut grid_text = String::with_capacity(text.len());
        let mut start = None;
        let mut markers = Vec::new();
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| MissionError::Vox(VoxError::Parse(format!("bad number {s:?}"))))
        };
        for line in text.lines() {
            if let Some(rest) = line.strip_prefix('@') {
                let f: Vec<&str> = rest.split_whitespace().collect();
                match f.as_slice() {
                    ["start", x, y, z, yaw] => {
                        start = Some(Pose::from_position_yaw(
                            Vec3::new(parse(x)?, parse(y)?, parse(z)?),
                            parse(yaw)?,
                        ));
                    }
                    ["mark", name, x, y, z] => {
                        markers.push((name.to_string(), Vec3::new(parse(x)?, parse(y)?, parse(z)?)))
                    }
                    _ => {
                        return Err(MissionError::Vox(VoxError::Parse(format!(
                            "bad annotation line {line:?}"
                        ))))
                    }
                }
            } else {
                grid_text.push_str(line);
                grid_text.push('\n');
            }
        }
        let grid = OccupancyGrid::from_vox_str(&grid_text)?;
        if grid.count(Voxel::Unknown) != 0 {
            return Err(MissionError::Vox(VoxError::Parse(
                "world grids may only contain free and occupied cells".into(),
            )));
        }
        let start = start.unwrap_or_else(|| {
            default_start(&grid).map_or(Pose::identity(), |v| Pose::from_translation(grid.voxel_center(v)))
        });
        Ok(Self {
            grid,
            start,
            markers,
        })
    }

    pub fn free_voxels(&self) -> Vec<VoxelIndex> {
        let g = &self.grid;
        (0..g.len())
            .filter(|&i| g.cells()[i] == Voxel::Free)
            .map(|i| g.unlinear(i))
            .collect()
    }
}

/// First free voxel with occupied support directly below, scanning in index order.
fn default_start(grid: &OccupancyGrid<f64>) -> Option<VoxelIndex> {
    (0..grid.len()).map(|i| grid.unlinear(i)).find(|&v| {
        grid.get(v) == Voxel::Free && v[2] > 0 && grid.get([v[0], v[1], v[2] - 1]) == Voxel::Occupied
    })
}

fn fill_box(grid: &mut OccupancyGrid<f64>, lo: [usize; 3], hi: [usize; 3], state: Voxel) {
    for z in lo[2]..hi[2] {
        for y in lo[1]..hi[1] {
            for x in lo[0]..hi[0] {
                grid.set([x, y, z], state);
            }
        }
    }
}

/// Generates a building: `levels` stacked floors, each a row of `rooms` rooms
/// joined by doorways. Level 0 has a stepped platform reachable by 1-voxel
/// steps; every upper level is reachable only through a vertical shaft.
pub fn generate_world(spec: &WorldSpec, seed: u64) -> Result<World, MissionError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let widths: Vec<usize> = (0..spec.rooms)
        .map(|_| rng.random_range(spec.room_min..=spec.room_max))
        .collect();
    let depth = rng.random_range(spec.room_min..=spec.room_max);
    let nx = 1 + widths.iter().map(|w| w + 1).sum::<usize>();
    let ny = depth + 2;
    let lh = spec.level_height + 1;
    let nz = spec.levels * lh + 1;
    let s = spec.resolution;
    let mut grid = OccupancyGrid::filled(Vec3::zero(), [nx, ny, nz], s, Voxel::Occupied)?;

    // Room interiors: x0[i] is the first interior column of room i.
    let mut x0 = Vec::with_capacity(spec.rooms);
    let mut x = 1;
    for w in &widths {
        x0.push(x);
        x += w + 1;
    }
    let mut markers = Vec::new();
    for level in 0..spec.levels {
        let z_floor = level * lh + 1;
        for (i, &w) in widths.iter().enumerate() {
            fill_box(
                &mut grid,
                [x0[i], 1, z_floor],
                [x0[i] + w, 1 + depth, z_floor + spec.level_height],
                Voxel::Free,
            );
        }
        for i in 1..spec.rooms {
            let wall_x = x0[i] - 1;
            let y = rng.random_range(1..=depth + 1 - spec.door_width);
            fill_box(
                &mut grid,
                [wall_x, y, z_floor],
                [wall_x + 1, y + spec.door_width, z_floor + spec.door_height],
                Voxel::Free,
            );
        }
        for (i, &w) in widths.iter().enumerate() {
            for _ in 0..spec.pillars_per_room {
                // 2×2 full-height pillar away from the walls.
                let px = x0[i] + rng.random_range(3..w - 4);
                let py = 1 + rng.random_range(3..depth - 4);
                fill_box(
                    &mut grid,
                    [px, py, z_floor],
                    [px + 2, py + 2, z_floor + spec.level_height],
                    Voxel::Occupied,
                );
            }
        }
    }

    // Stepped platform in the last ground-level room: a 1-voxel step leading
    // onto a 2-voxel platform along the far wall.
    {
        let room = spec.rooms - 1;
        let w = widths[room];
        let (xs, xe) = (x0[room] + w - 3, x0[room] + w);
        fill_box(&mut grid, [xs, 1, 1], [xe, 1 + depth, 3], Voxel::Occupied);
        fill_box(&mut grid, [xs - 2, 1, 1], [xs, 1 + depth, 2], Voxel::Occupied);
        if let Some(y) = (1..1 + depth).find(|&y| grid.get([xs + 1, y, 3]) == Voxel::Free) {
            markers.push(("platform".to_string(), grid.voxel_center([xs + 1, y, 3])));
        }
    }

    // Shafts through each slab, in a seeded room, clear of the walls.
    for level in 1..spec.levels {
        let room = rng.random_range(0..spec.rooms);
        let w = widths[room];
        let k = spec.shaft_size;
        // Keep clear of the platform columns along the far wall.
        let sx = x0[room] + rng.random_range(1..=w - k - 6);
        let sy = 1 + rng.random_range(1..=depth - k - 1);
        let slab = level * lh;
        // Clear anything standing in the shaft column on both adjacent levels.
        fill_box(
            &mut grid,
            [sx, sy, slab - spec.level_height],
            [sx + k, sy + k, slab + 1 + spec.level_height],
            Voxel::Free,
        );
        markers.push((format!("shaft{level}"), grid.voxel_center([sx + k / 2, sy + k / 2, slab])));
    }

    // Start: ground level, first room, first standable voxel near its center.
    let cx = x0[0] + widths[0] / 2;
    let cy = 1 + depth / 2;
    let start_v = nearest_standable(&grid, [cx, cy, 1]).ok_or(MissionError::NoFreeSpace)?;
    let start = Pose::from_position_yaw(grid.voxel_center(start_v), 0.0);
    Ok(World {
        grid,
        start,
        markers,
    })
}

fn standable(grid: &OccupancyGrid<f64>, v: VoxelIndex) -> bool {
    v[2] > 0
        && v[2] + 1 < grid.dims()[2]
        && grid.get(v) == Voxel::Free
        && grid.get([v[0], v[1], v[2] + 1]) == Voxel::Free
        && grid.get([v[0], v[1], v[2] - 1]) == Voxel::Occupied
}

fn nearest_standable(grid: &OccupancyGrid<f64>, around: VoxelIndex) -> Option<VoxelIndex> {
    let [nx, ny, _] = grid.dims();
    let mut best: Option<(usize, VoxelIndex)> = None;
    for y in 0..ny {
        for x in 0..nx {
            let v = [x, y, around[2]];
            if standable(grid, v) {
                let d = x.abs_diff(around[0]).pow(2) + y.abs_diff(around[1]).pow(2);
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, v));
                }
            }
        }
    }
    best.map(|b| b.1)
}

/// 6-connected free voxels reachable from `from`.
pub fn flood_fill_free(grid: &OccupancyGrid<f64>, from: VoxelIndex) -> Vec<bool> {
    let mut seen = vec![false; grid.len()];
    if grid.get(from) != Voxel::Free {
        return seen;
    }
    let mut queue = VecDeque::from([from]);
    seen[grid.linear(from)] = true;
    while let Some(v) = queue.pop_front() {
        for (axis, delta) in [(0, -1i64), (0, 1), (1, -1), (1, 1), (2, -1), (2, 1)] {
            let mut n = [v[0] as i64, v[1] as i64, v[2] as i64];
            n[axis] += delta;
            if let Some(nv) = grid.checked_index(n) {
                let i = grid.linear(nv);
                if !seen[i] && grid.cells()[i] == Voxel::Free {
                    seen[i] = true;
                    queue.push_back(nv);
                }
            }
        }
    }
    seen
}

/// Voxels a ground robot can stand on, reachable from `from` with steps of at
/// most one voxel and the given clearance above the support.
pub fn ground_reachable(grid: &OccupancyGrid<f64>, from: VoxelIndex, clearance: usize) -> Vec<bool> {
    let ok = |v: VoxelIndex| -> bool {
        v[2] > 0
            && v[2] + clearance <= grid.dims()[2]
            && grid.get([v[0], v[1], v[2] - 1]) == Voxel::Occupied
            && (0..clearance).all(|k| grid.get([v[0], v[1], v[2] + k]) == Voxel::Free)
    };
    let mut seen = vec![false; grid.len()];
    if !ok(from) {
        return seen;
    }
    let mut queue = VecDeque::from([from]);
    seen[grid.linear(from)] = true;
    while let Some(v) = queue.pop_front() {
        for (dx, dy) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
            for dz in [-1i64, 0, 1] {
                let n = [v[0] as i64 + dx, v[1] as i64 + dy, v[2] as i64 + dz];
                let Some(nv) = grid.checked_index(n) else {
                    continue;
                };
                let i = grid.linear(nv);
                if seen[i] || !ok(nv) {
                    continue;
                }
                // Stepping up needs headroom above the current cell; stepping
                // down needs headroom above the target.
                let head = if dz > 0 {
                    grid.checked_index([v[0] as i64, v[1] as i64, v[2] as i64 + clearance as i64])
                        .is_some_and(|h| grid.get(h) == Voxel::Free)
                } else if dz < 0 {
                    grid.checked_index([n[0], n[1], n[2] + clearance as i64])
                        .is_some_and(|h| grid.get(h) == Voxel::Free)
                } else {
                    true
                };
                if head {
                    seen[i] = true;
                    queue.push_back(nv);
                }
            }
        }
    }
    seen
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_is_seeded_and_round_trips() {
        let spec = WorldSpec::default();
        let a = generate_world(&spec, 7).unwrap();
        let b = generate_world(&spec, 7).unwrap();
        assert_eq!(a, b);
        let text = a.to_file_string();
        let back = World::from_file_str(&text).unwrap();
        assert_eq!(back.grid, a.grid);
        assert_eq!(back.to_file_string(), text);
        assert_ne!(generate_world(&spec, 8).unwrap().grid, a.grid);
    }

    #[test]
    fn minimal_world_round_trips() {
        let grid = OccupancyGrid::filled(Vec3::zero(), [3, 3, 3], 0.4, Voxel::Free).unwrap();
        let w = World {
            grid,
            start: Pose::from_translation(Vec3::new(0.6, 0.6, 0.6)),
            markers: vec![],
        };
        let back = World::from_file_str(&w.to_file_string()).unwrap();
        assert_eq!(back.grid, w.grid);
        assert_eq!(back.start.position, w.start.position);
    }

    #[test]
    fn generated_world_is_connected_and_levels_are_separated() {
        for seed in 0..5 {
            let spec = WorldSpec::default();
            let w = generate_world(&spec, seed).unwrap();
            let start = w.grid.voxel_of(w.start.position).unwrap();
            let reach = flood_fill_free(&w.grid, start);
            let free = w.grid.count(Voxel::Free);
            assert_eq!(reach.iter().filter(|&&r| r).count(), free, "seed {seed}");
            // The slab between the levels is occupied except for the shaft.
            let slab = spec.level_height + 1;
            let [nx, ny, _] = w.grid.dims();
            let open = (0..nx)
                .flat_map(|x| (0..ny).map(move |y| [x, y, slab]))
                .filter(|&v| w.grid.get(v) == Voxel::Free)
                .count();
            assert_eq!(open, spec.shaft_size * spec.shaft_size);
            // Ground robots never reach the upper level.
            let ground = ground_reachable(&w.grid, start, 2);
            assert!(ground
                .iter()
                .enumerate()
                .filter(|(_, &r)| r)
                .all(|(i, _)| w.grid.unlinear(i)[2] < slab));
            // The platform top is ground reachable via the step.
            let platform = w.markers.iter().find(|m| m.0 == "platform").unwrap().1;
            let pv = w.grid.voxel_of(platform).unwrap();
            assert!(ground[w.grid.linear(pv)], "seed {seed}");
        }
    }
}
