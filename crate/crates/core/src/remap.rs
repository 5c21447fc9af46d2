//! Voxel-aware range images: each pixel is re-derived from a local occupancy
//! grid as the distance to the first occupied voxel along its ray.
//!
//! Also owns the on-disk scan and dataset formats used to train the codec.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geom::{unproject, GeomError, LidarIntrinsics, Pose, RangeImage, Vec3};
use crate::scalar::Real;
use crate::wire::{put_f32s, put_u16, Reader};
use crate::voxmap::{integrate_cloud, traverse, OccupancyGrid, Voxel};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error(transparent)]
    Geom(#[from] GeomError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Sensor-centered grid used for remapping: the sensor sits at the center of
/// voxel `(m, m, m)` and the grid reaches at least `max_range + s` on each side.
pub fn local_grid<T: Real>(max_range: T, s_vxl: T) -> OccupancyGrid<T> {
    let m = ((max_range + s_vxl) / s_vxl).ceil().to_usize().expect("finite extent");
    let n = 2 * m + 1;
    let origin = Vec3::splat(-(T::from_usize_lossy(m) + T::lit(0.5)) * s_vxl);
    OccupancyGrid::new(origin, [n, n, n], s_vxl).expect("valid local grid")
}

/// Builds the occupancy grid of a single range image in the sensor frame.
pub fn image_grid<T: Real>(x: &RangeImage<T>, s_vxl: T) -> OccupancyGrid<T> {
    let mut grid = local_grid(x.intrinsics.max_range, s_vxl);
    integrate_cloud(&mut grid, &Pose::identity(), &unproject(x))
        .expect("sensor origin lies inside its own local grid");
    grid
}

/// Re-traces every pixel ray through `grid` (sensor at the grid's origin frame
/// position `sensor`) and returns the entry distance of the first occupied voxel,
/// skipping the sensor's own voxel.
pub fn retrace<T: Real>(
    grid: &OccupancyGrid<T>,
    sensor: Vec3<T>,
    intr: &LidarIntrinsics<T>,
) -> RangeImage<T> {
    let mut out = RangeImage::invalid(*intr);
    let r_max = intr.max_range;
    for row in 0..intr.rows {
        for col in 0..intr.cols {
            let end = sensor + intr.ray_direction(row, col) * r_max;
            let mut hit = None;
            let mut first = true;
            traverse(grid, sensor, end, |st| {
                if first {
                    first = false;
                    return true;
                }
                if grid.get(st.voxel) == Voxel::Occupied {
                    hit = Some(st.t_entry * r_max);
                    return false;
                }
                true
            })
            .expect("sensor inside grid");
            out.set(row, col, hit);
        }
    }
    out
}

/// Computes `x^vxl` from a raw range image at voxel size `s_vxl`.
pub fn voxel_aware_remap<T: Real>(x: &RangeImage<T>, s_vxl: T) -> RangeImage<T> {
    if x.valid_count() == 0 {
        return RangeImage::invalid(x.intrinsics);
    }
    let grid = image_grid(x, s_vxl);
    retrace(&grid, Vec3::zero(), &x.intrinsics)
}

/// Remaps an `f32` image, doing the geometry in `f64`.
pub fn remap_f32(x: &RangeImage<f32>, s_vxl: f64) -> RangeImage<f32> {
    voxel_aware_remap(&x.cast::<f64>(), s_vxl).cast()
}

const SCAN_MAGIC: &[u8; 4] = b"RSCN";
const PAIR_MAGIC: &[u8; 4] = b"RIMG";

/// Raw scan record: `RSCN`, u16 H, u16 W, f32 min/max elevation, f32 max range,
/// then H·W f32 ranges (NaN = invalid).
pub fn encode_scan(img: &RangeImage<f32>) -> Vec<u8> {
    let intr = &img.intrinsics;
    let mut buf = Vec::with_capacity(20 + 4 * intr.pixel_count());
    buf.extend_from_slice(SCAN_MAGIC);
    put_u16(&mut buf, intr.rows);
    put_u16(&mut buf, intr.cols);
    put_f32s(
        &mut buf,
        &[intr.min_elevation, intr.max_elevation, intr.max_range],
    );
    put_f32s(&mut buf, img.ranges());
    buf
}

pub fn decode_scan(bytes: &[u8], path: &Path) -> Result<RangeImage<f32>, DatasetError> {
    let bad = |reason: &str| DatasetError::Format {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let mut r = Reader::new(bytes);
    if r.take(4) != Some(SCAN_MAGIC.as_slice()) {
        return Err(bad("bad magic"));
    }
    let (h, w) = (
        r.u16().ok_or_else(|| bad("truncated"))? as usize,
        r.u16().ok_or_else(|| bad("truncated"))? as usize,
    );
    let vals = r.f32s(3).ok_or_else(|| bad("truncated"))?;
    let intr = LidarIntrinsics::new(h, w, vals[0], vals[1], vals[2])?;
    let ranges = r.f32s(h * w).ok_or_else(|| bad("truncated"))?;
    if r.pos != bytes.len() {
        return Err(bad("trailing bytes"));
    }
    Ok(RangeImage::from_ranges(intr, ranges)?)
}

/// A raw image and its voxel-aware target.
#[derive(Debug, Clone)]
pub struct Pair {
    pub name: String,
    pub raw: RangeImage<f32>,
    pub vxl: RangeImage<f32>,
}

/// Pair record: `RIMG`, u16 H, u16 W, f32 max range, H·W raw f32, H·W remapped f32.
pub fn encode_pair(raw: &RangeImage<f32>, vxl: &RangeImage<f32>) -> Vec<u8> {
    let intr = &raw.intrinsics;
    let n = intr.pixel_count();
    let mut buf = Vec::with_capacity(12 + 8 * n);
    buf.extend_from_slice(PAIR_MAGIC);
    put_u16(&mut buf, intr.rows);
    put_u16(&mut buf, intr.cols);
    put_f32s(&mut buf, &[intr.max_range]);
    put_f32s(&mut buf, raw.ranges());
    put_f32s(&mut buf, vxl.ranges());
    buf
}

/// Decodes a pair record; the elevation FoV is not part of the record and comes
/// from the dataset metadata.
pub fn decode_pair(
    bytes: &[u8],
    intr: &LidarIntrinsics<f32>,
    path: &Path,
) -> Result<(RangeImage<f32>, RangeImage<f32>), DatasetError> {
    let bad = |reason: String| DatasetError::Format {
        path: path.to_path_buf(),
        reason,
    };
    let mut r = Reader::new(bytes);
    if r.take(4) != Some(PAIR_MAGIC.as_slice()) {
        return Err(bad("bad magic".into()));
    }
    let h = r.u16().ok_or_else(|| bad("truncated".into()))? as usize;
    let w = r.u16().ok_or_else(|| bad("truncated".into()))? as usize;
    let r_max = r.f32().ok_or_else(|| bad("truncated".into()))?;
    if h != intr.rows || w != intr.cols || r_max != intr.max_range {
        return Err(bad(format!(
            "record is {h}x{w} @ {r_max} m, metadata says {}x{} @ {} m",
            intr.rows, intr.cols, intr.max_range
        )));
    }
    let raw = r.f32s(h * w).ok_or_else(|| bad("truncated".into()))?;
    let vxl = r.f32s(h * w).ok_or_else(|| bad("truncated".into()))?;
    if r.pos != bytes.len() {
        return Err(bad("trailing bytes".into()));
    }
    Ok((
        RangeImage::from_ranges(*intr, raw)?,
        RangeImage::from_ranges(*intr, vxl)?,
    ))
}

/// Deterministic 90/10 train/test split of `n` items.
pub fn split_indices(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let n_test = if n >= 2 { (n / 10).max(1) } else { 0 };
    let mut test = idx[..n_test].to_vec();
    let mut train = idx[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    (train, test)
}

/// Remapped pairs with a fixed train/test split.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub intrinsics: LidarIntrinsics<f32>,
    pub s_vxl: f64,
    pub seed: u64,
    pub pairs: Vec<Pair>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Dataset {
    pub fn from_pairs(
        intrinsics: LidarIntrinsics<f32>,
        s_vxl: f64,
        seed: u64,
        pairs: Vec<Pair>,
    ) -> Result<Self, DatasetError> {
        if pairs.is_empty() {
            return Err(DatasetError::EmptyDataset);
        }
        let (train, test) = split_indices(pairs.len(), seed);
        Ok(Self {
            intrinsics,
            s_vxl,
            seed,
            pairs,
            train,
            test,
        })
    }

    /// Remaps raw images, naming pairs by position.
    pub fn from_raw(
        intrinsics: LidarIntrinsics<f32>,
        s_vxl: f64,
        seed: u64,
        raws: Vec<RangeImage<f32>>,
    ) -> Result<Self, DatasetError> {
        let pairs = raws
            .into_iter()
            .enumerate()
            .map(|(i, raw)| Pair {
                name: pair_file_name(i),
                vxl: remap_f32(&raw, s_vxl),
                raw,
            })
            .collect();
        Self::from_pairs(intrinsics, s_vxl, seed, pairs)
    }

    /// Same raw images and split, with targets recomputed at another voxel size.
    pub fn with_voxel_size(&self, s_vxl: f64) -> Self {
        let mut out = self.clone();
        out.s_vxl = s_vxl;
        for p in &mut out.pairs {
            p.vxl = remap_f32(&p.raw, s_vxl);
        }
        out
    }

    pub fn train_pairs(&self) -> impl Iterator<Item = &Pair> {
        self.train.iter().map(move |&i| &self.pairs[i])
    }

    pub fn test_pairs(&self) -> impl Iterator<Item = &Pair> {
        self.test.iter().map(move |&i| &self.pairs[i])
    }
}

pub fn pair_file_name(i: usize) -> String {
    format!("pair_{i:05}.rimg")
}

const META_FILE: &str = "dataset.meta";

fn meta_text(intr: &LidarIntrinsics<f32>, s_vxl: f64, seed: u64) -> String {
    format!(
        "rows = {}\ncols = {}\nmin_elevation = {}\nmax_elevation = {}\nmax_range = {}\ns_vxl = {}\nseed = {}\n",
        intr.rows, intr.cols, intr.min_elevation, intr.max_elevation, intr.max_range, s_vxl, seed
    )
}

/// Writes `dataset.meta` plus one `RIMG` file per pair.
pub fn write_dataset(dir: &Path, ds: &Dataset) -> Result<(), DatasetError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_dataset_meta(dir, &ds.intrinsics, ds.s_vxl, ds.seed)?;
    for p in &ds.pairs {
        let path = dir.join(&p.name);
        fs::write(&path, encode_pair(&p.raw, &p.vxl)).map_err(io_err(&path))?;
    }
    Ok(())
}

pub fn write_dataset_meta(
    dir: &Path,
    intr: &LidarIntrinsics<f32>,
    s_vxl: f64,
    seed: u64,
) -> Result<(), DatasetError> {
    let path = dir.join(META_FILE);
    fs::write(&path, meta_text(intr, s_vxl, seed)).map_err(io_err(&path))
}

fn sorted_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>, DatasetError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == ext))
        .collect();
    files.sort();
    Ok(files)
}

/// Loads a dataset written by [`write_dataset`]; pairs in lexicographic file order.
pub fn load_dataset(dir: &Path) -> Result<Dataset, DatasetError> {
    let meta_path = dir.join(META_FILE);
    let text = fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?;
    let bad = |reason: String| DatasetError::Format {
        path: meta_path.clone(),
        reason,
    };
    let get = |key: &str| -> Result<&str, DatasetError> {
        text.lines()
            .filter_map(|l| l.split_once('='))
            .find(|(k, _)| k.trim() == key)
            .map(|(_, v)| v.trim())
            .ok_or_else(|| bad(format!("missing key {key}")))
    };
    fn parse<U: std::str::FromStr>(v: &str, key: &str, path: &Path) -> Result<U, DatasetError> {
        v.parse().map_err(|_| DatasetError::Format {
            path: path.to_path_buf(),
            reason: format!("bad value for {key}: {v:?}"),
        })
    }
    let intr = LidarIntrinsics::new(
        parse(get("rows")?, "rows", &meta_path)?,
        parse(get("cols")?, "cols", &meta_path)?,
        parse(get("min_elevation")?, "min_elevation", &meta_path)?,
        parse(get("max_elevation")?, "max_elevation", &meta_path)?,
        parse(get("max_range")?, "max_range", &meta_path)?,
    )?;
    let s_vxl: f64 = parse(get("s_vxl")?, "s_vxl", &meta_path)?;
    let seed: u64 = parse(get("seed")?, "seed", &meta_path)?;
    let mut pairs = Vec::new();
    for path in sorted_files(dir, "rimg")? {
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        let (raw, vxl) = decode_pair(&bytes, &intr, &path)?;
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        pairs.push(Pair { name, raw, vxl });
    }
    Dataset::from_pairs(intr, s_vxl, seed, pairs)
}

/// Builds a dataset from a directory of recorded `RSCN` scans (lexicographic order).
pub fn build_dataset(scan_dir: &Path, s_vxl: f64, seed: u64) -> Result<Dataset, DatasetError> {
    let mut pairs = Vec::new();
    let mut intr = None;
    for path in sorted_files(scan_dir, "rscn")? {
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        let raw = decode_scan(&bytes, &path)?;
        match intr {
            None => intr = Some(raw.intrinsics),
            Some(i) if i != raw.intrinsics => {
                return Err(DatasetError::Format {
                    path,
                    reason: "scan intrinsics differ from earlier scans".into(),
                })
            }
            Some(_) => {}
        }
        let stem = path
            .file_stem()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        pairs.push(Pair {
            name: format!("{stem}.rimg"),
            vxl: remap_f32(&raw, s_vxl),
            raw,
        });
    }
    let intr = intr.ok_or(DatasetError::EmptyDataset)?;
    Dataset::from_pairs(intr, s_vxl, seed, pairs)
}
