//! Spinning-LiDAR simulation against a ground-truth grid and dataset capture.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::world::World;
use super::MissionError;
use crate::geom::{LidarIntrinsics, Pose, RangeImage};
use crate::remap::{remap_f32, Dataset, Pair};
use crate::voxmap::{traverse, OccupancyGrid, Voxel};

/// Renders one range image: each pixel reports the entry distance of the first
/// occupied voxel along its bin-center ray, or no return within max range.
/// With `noise = Some((sigma, rng))` each return gets Gaussian range noise,
/// clamped to `(0, max_range]`.
pub fn simulate_lidar<R: Rng + ?Sized>(
    world: &OccupancyGrid<f64>,
    pose: &Pose<f64>,
    intr: &LidarIntrinsics<f64>,
    mut noise: Option<(f64, &mut R)>,
) -> Result<RangeImage<f64>, MissionError> {
    if world.state_at(pose.position) != Some(Voxel::Free) {
        return Err(MissionError::PoseInCollision(pose.position.to_array()));
    }
    let r_max = intr.max_range;
    let mut out = RangeImage::invalid(*intr);
    let normal = noise
        .as_ref()
        .map(|(sigma, _)| Normal::new(0.0, *sigma).expect("finite sigma"));
    for row in 0..intr.rows {
        for col in 0..intr.cols {
            let dir = pose.orientation.rotate(intr.ray_direction(row, col));
            let end = pose.position + dir * r_max;
            let mut hit = None;
            traverse(world, pose.position, end, |st| {
                if world.get(st.voxel) == Voxel::Occupied {
                    hit = Some(st.t_entry * r_max);
                    false
                } else {
                    true
                }
            })?;
            if let (Some(r), Some((_, rng)), Some(n)) = (hit, noise.as_mut(), normal.as_ref()) {
                hit = Some((r + n.sample(*rng)).clamp(1e-6, r_max));
            }
            out.set(row, col, hit);
        }
    }
    Ok(out)
}

/// Noise-free scan converted to the `f32` image the codecs consume.
pub fn scan_f32(
    world: &OccupancyGrid<f64>,
    pose: &Pose<f64>,
    intr: &LidarIntrinsics<f32>,
) -> Result<RangeImage<f32>, MissionError> {
    let img = simulate_lidar::<ChaCha8Rng>(world, pose, &intr.cast(), None)?;
    Ok(to_f32(&img, intr))
}

/// Casts to `f32`, keeping every valid range within the `f32` max range.
pub fn to_f32(img: &RangeImage<f64>, intr: &LidarIntrinsics<f32>) -> RangeImage<f32> {
    let ranges = img
        .ranges()
        .iter()
        .map(|&r| {
            if r.is_nan() {
                f32::NAN
            } else {
                (r as f32).clamp(f32::MIN_POSITIVE, intr.max_range)
            }
        })
        .collect();
    RangeImage::from_ranges(*intr, ranges).expect("ranges clamped into (0, max_range]")
}

/// Samples `n` free sensor poses (uniform over free voxels, random yaw and a
/// jitter inside the voxel) and renders raw/voxel-aware training pairs.
pub fn capture_dataset(
    world: &World,
    intr: &LidarIntrinsics<f32>,
    n: usize,
    s_vxl: f64,
    noise_sigma: f64,
    seed: u64,
) -> Result<Dataset, MissionError> {
    let free = world.free_voxels();
    if free.is_empty() {
        return Err(MissionError::NoFreeSpace);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = world.resolution() * 0.45;
    let intr64 = intr.cast::<f64>();
    let mut pairs = Vec::with_capacity(n);
    for i in 0..n {
        let v = free[rng.random_range(0..free.len())];
        let c = world.grid.voxel_center(v);
        let jitter = crate::geom::Vec3::new(
            rng.random_range(-half..half),
            rng.random_range(-half..half),
            rng.random_range(-half..half),
        );
        let yaw = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let pose = Pose::from_position_yaw(c + jitter, yaw);
        let img = if noise_sigma > 0.0 {
            simulate_lidar(&world.grid, &pose, &intr64, Some((noise_sigma, &mut rng)))?
        } else {
            simulate_lidar::<ChaCha8Rng>(&world.grid, &pose, &intr64, None)?
        };
        let raw = to_f32(&img, intr);
        let vxl = remap_f32(&raw, s_vxl);
        pairs.push(Pair {
            name: crate::remap::pair_file_name(i),
            raw,
            vxl,
        });
    }
    Ok(Dataset::from_pairs(*intr, s_vxl, seed, pairs)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec3;

    fn sealed_room() -> OccupancyGrid<f64> {
        let mut g = OccupancyGrid::filled(Vec3::zero(), [11, 11, 11], 0.5, Voxel::Occupied).unwrap();
        for z in 1..10 {
            for y in 1..10 {
                for x in 1..10 {
                    g.set([x, y, z], Voxel::Free);
                }
            }
        }
        g
    }

    #[test]
    fn sealed_room_returns_everywhere() {
        let g = sealed_room();
        let intr = LidarIntrinsics::symmetric_deg(8, 36, 30.0, 20.0);
        let pose = Pose::from_position_yaw(Vec3::new(2.75, 2.75, 2.75), 0.4);
        let img = simulate_lidar::<ChaCha8Rng>(&g, &pose, &intr, None).unwrap();
        assert_eq!(img.valid_count(), intr.pixel_count());
        let again = simulate_lidar::<ChaCha8Rng>(&g, &pose, &intr, None).unwrap();
        assert!(img.same_pixels(&again));
    }

    #[test]
    fn collision_is_rejected() {
        let g = sealed_room();
        let intr = LidarIntrinsics::symmetric_deg(8, 36, 30.0, 20.0);
        let pose = Pose::from_translation(Vec3::new(0.2, 0.2, 0.2));
        assert!(matches!(
            simulate_lidar::<ChaCha8Rng>(&g, &pose, &intr, None),
            Err(MissionError::PoseInCollision(_))
        ));
    }
}
