//! Poses, rigid transforms, LiDAR intrinsics and point-cloud/range-image conversion.
//!
//! Range images are indexed `(row, col)`. Row 0 is the highest elevation bin and
//! column `j` covers azimuths `[-π + j·2π/W, -π + (j+1)·2π/W)`. Invalid pixels hold
//! `NaN`.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("quaternion norm {0} is not 1")]
    NonUnitQuaternion(f64),
    #[error("pose position is not finite")]
    NonFinitePosition,
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(&'static str),
    #[error("range array has {got} entries, intrinsics require {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("range {value} at pixel {index} outside (0, {max}]")]
    RangeOutOfBounds { index: usize, value: f64, max: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Vec3<T> {
    pub const fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    pub fn splat(v: T) -> Self {
        Self::new(v, v, v)
    }

    pub fn from_array(a: [T; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [T; 3] {
        [self.x, self.y, self.z]
    }

    #[inline]
    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(self, o: Self) -> Self {
        Self::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    #[inline]
    pub fn norm_squared(self) -> T {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> T {
        self.norm_squared().sqrt()
    }

    #[inline]
    pub fn distance(self, o: Self) -> T {
        (self - o).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    #[inline]
    pub fn component(self, axis: usize) -> T {
        match axis {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }

    pub fn lerp(self, o: Self, t: T) -> Self {
        self + (o - self) * t
    }

    pub fn cast<U: Real>(self) -> Vec3<U> {
        Vec3::new(self.x.cast(), self.y.cast(), self.z.cast())
    }
}

impl<T: Real> Add for Vec3<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Real> AddAssign for Vec3<T> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Real> Sub for Vec3<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<T: Real> Mul<T> for Vec3<T> {
    type Output = Self;
    #[inline]
    fn mul(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }
}

impl<T: Real> Neg for Vec3<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

/// Quaternion `(w, x, y, z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quat<T> {
    pub w: T,
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Quat<T> {
    pub const fn new(w: T, x: T, y: T, z: T) -> Self {
        Self { w, x, y, z }
    }

    pub fn identity() -> Self {
        Self::new(T::one(), T::zero(), T::zero(), T::zero())
    }

    /// Rotation of `angle` radians about `axis` (need not be normalized).
    pub fn from_axis_angle(axis: Vec3<T>, angle: T) -> Self {
        let half = angle / T::lit(2.0);
        let a = axis * (T::one() / axis.norm());
        let s = half.sin();
        Self::new(half.cos(), a.x * s, a.y * s, a.z * s)
    }

    pub fn from_yaw(yaw: T) -> Self {
        Self::from_axis_angle(Vec3::new(T::zero(), T::zero(), T::one()), yaw)
    }

    pub fn dot(self, o: Self) -> T {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm(self) -> T {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Self {
        let n = self.norm();
        Self::new(self.w / n, self.x / n, self.y / n, self.z / n)
    }

    pub fn conjugate(self) -> Self {
        Self::new(self.w, -self.x, -self.y, -self.z)
    }

    /// Rotates `v` by this (unit) quaternion.
    #[inline]
    pub fn rotate(self, v: Vec3<T>) -> Vec3<T> {
        // v' = v + 2w(u×v) + 2u×(u×v)
        let u = Vec3::new(self.x, self.y, self.z);
        let two = T::lit(2.0);
        let uv = u.cross(v);
        let uuv = u.cross(uv);
        v + uv * (two * self.w) + uuv * two
    }

    /// Yaw angle (rotation about +z) of the rotated x-axis.
    pub fn yaw(self) -> T {
        let fwd = self.rotate(Vec3::new(T::one(), T::zero(), T::zero()));
        fwd.y.atan2(fwd.x)
    }

    pub fn cast<U: Real>(self) -> Quat<U> {
        Quat::new(self.w.cast(), self.x.cast(), self.y.cast(), self.z.cast())
    }
}

impl<T: Real> Mul for Quat<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self::new(
            self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        )
    }
}

/// Rigid body pose: rotation followed by translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose<T> {
    pub position: Vec3<T>,
    pub orientation: Quat<T>,
}

impl<T: Real> Pose<T> {
    /// Builds a pose, rejecting non-unit quaternions and non-finite positions.
    pub fn new(position: Vec3<T>, orientation: Quat<T>) -> Result<Self, GeomError> {
        if !position.is_finite() {
            return Err(GeomError::NonFinitePosition);
        }
        let n = orientation.norm();
        if !((n - T::one()).abs() <= T::unit_tolerance()) {
            return Err(GeomError::NonUnitQuaternion(n.as_f64()));
        }
        Ok(Self {
            position,
            orientation,
        })
    }

    pub fn identity() -> Self {
        Self {
            position: Vec3::zero(),
            orientation: Quat::identity(),
        }
    }

    pub fn from_translation(position: Vec3<T>) -> Self {
        Self {
            position,
            orientation: Quat::identity(),
        }
    }

    pub fn from_position_yaw(position: Vec3<T>, yaw: T) -> Self {
        Self {
            position,
            orientation: Quat::from_yaw(yaw),
        }
    }

    #[inline]
    pub fn transform_point(&self, p: Vec3<T>) -> Vec3<T> {
        self.orientation.rotate(p) + self.position
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            position: self.transform_point(other.position),
            orientation: self.orientation * other.orientation,
        }
    }

    pub fn inverse(&self) -> Self {
        let inv = self.orientation.conjugate();
        Self {
            position: -inv.rotate(self.position),
            orientation: inv,
        }
    }

    pub fn cast<U: Real>(&self) -> Pose<U> {
        Pose {
            position: self.position.cast(),
            orientation: self.orientation.cast(),
        }
    }
}

/// Translation distance and rotation angle between two poses.
///
/// Symmetric in its arguments bit-for-bit.
pub fn pose_difference<T: Real>(a: &Pose<T>, b: &Pose<T>) -> (T, T) {
    let dt = (a.position - b.position).norm();
    let c = a.orientation.dot(b.orientation).abs().min(T::one());
    (dt, T::lit(2.0) * c.acos())
}

/// Maps every point of `cloud` through `pose` (rotate, then translate).
pub fn transform_cloud<T: Real>(pose: &Pose<T>, cloud: &[Vec3<T>]) -> Vec<Vec3<T>> {
    cloud.iter().map(|&p| pose.transform_point(p)).collect()
}

/// Spinning-LiDAR model: `rows × cols` bins over the vertical field of view and a
/// full 360° horizontal sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarIntrinsics<T> {
    pub rows: usize,
    pub cols: usize,
    pub min_elevation: T,
    pub max_elevation: T,
    pub max_range: T,
}

impl<T: Real> LidarIntrinsics<T> {
    pub fn new(
        rows: usize,
        cols: usize,
        min_elevation: T,
        max_elevation: T,
        max_range: T,
    ) -> Result<Self, GeomError> {
        if rows == 0 || cols == 0 {
            return Err(GeomError::InvalidIntrinsics("rows and cols must be >= 1"));
        }
        if !(min_elevation < max_elevation) {
            return Err(GeomError::InvalidIntrinsics(
                "min elevation must be below max elevation",
            ));
        }
        if !(max_range > T::zero()) || !max_range.is_finite() {
            return Err(GeomError::InvalidIntrinsics("max range must be positive"));
        }
        Ok(Self {
            rows,
            cols,
            min_elevation,
            max_elevation,
            max_range,
        })
    }

    /// Symmetric vertical field of view given in degrees.
    pub fn symmetric_deg(rows: usize, cols: usize, half_fov_deg: f64, max_range: f64) -> Self {
        let h = half_fov_deg.to_radians();
        Self::new(rows, cols, T::lit(-h), T::lit(h), T::lit(max_range))
            .expect("valid symmetric intrinsics")
    }

    pub fn pixel_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn elevation_step(&self) -> T {
        (self.max_elevation - self.min_elevation) / T::from_usize_lossy(self.rows)
    }

    pub fn azimuth_step(&self) -> T {
        T::TAU() / T::from_usize_lossy(self.cols)
    }

    pub fn row_elevation(&self, row: usize) -> T {
        self.max_elevation - (T::from_usize_lossy(row) + T::lit(0.5)) * self.elevation_step()
    }

    pub fn col_azimuth(&self, col: usize) -> T {
        (T::from_usize_lossy(col) + T::lit(0.5)) * self.azimuth_step() - T::PI()
    }

    /// Unit ray direction through the center of bin `(row, col)`.
    pub fn ray_direction(&self, row: usize, col: usize) -> Vec3<T> {
        let e = self.row_elevation(row);
        let a = self.col_azimuth(col);
        Vec3::new(e.cos() * a.cos(), e.cos() * a.sin(), e.sin())
    }

    /// Bin containing direction `p` (need not be unit), if inside the vertical FoV.
    pub fn bin_of(&self, p: Vec3<T>) -> Option<(usize, usize)> {
        let horiz = (p.x * p.x + p.y * p.y).sqrt();
        let elev = p.z.atan2(horiz);
        if elev > self.max_elevation || elev < self.min_elevation {
            return None;
        }
        let row = ((self.max_elevation - elev) / self.elevation_step())
            .floor()
            .to_usize()?
            .min(self.rows - 1);
        let w = T::from_usize_lossy(self.cols);
        let az = p.y.atan2(p.x);
        let col = (w * (az + T::PI()) / T::TAU()).floor().to_usize()? % self.cols;
        Some((row, col))
    }

    pub fn cast<U: Real>(&self) -> LidarIntrinsics<U> {
        LidarIntrinsics {
            rows: self.rows,
            cols: self.cols,
            min_elevation: self.min_elevation.cast(),
            max_elevation: self.max_elevation.cast(),
            max_range: self.max_range.cast(),
        }
    }
}

/// `rows × cols` range samples, row-major, `NaN` where no return exists.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeImage<T> {
    pub intrinsics: LidarIntrinsics<T>,
    ranges: Vec<T>,
}

impl<T: Real> RangeImage<T> {
    pub fn invalid(intrinsics: LidarIntrinsics<T>) -> Self {
        Self {
            ranges: vec![T::nan(); intrinsics.pixel_count()],
            intrinsics,
        }
    }

    /// Wraps raw ranges; non-finite entries are treated as invalid.
    pub fn from_ranges(intrinsics: LidarIntrinsics<T>, ranges: Vec<T>) -> Result<Self, GeomError> {
        if ranges.len() != intrinsics.pixel_count() {
            return Err(GeomError::ShapeMismatch {
                expected: intrinsics.pixel_count(),
                got: ranges.len(),
            });
        }
        let mut img = Self { intrinsics, ranges };
        for (index, r) in img.ranges.iter_mut().enumerate() {
            if !r.is_finite() {
                *r = T::nan();
            } else if !(*r > T::zero() && *r <= intrinsics.max_range) {
                return Err(GeomError::RangeOutOfBounds {
                    index,
                    value: r.as_f64(),
                    max: intrinsics.max_range.as_f64(),
                });
            }
        }
        Ok(img)
    }

    pub fn ranges(&self) -> &[T] {
        &self.ranges
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Option<T> {
        let r = self.ranges[row * self.intrinsics.cols + col];
        r.is_finite().then_some(r)
    }

    /// Sets a pixel; values outside `(0, max_range]` mark it invalid.
    pub fn set(&mut self, row: usize, col: usize, range: Option<T>) {
        let v = match range {
            Some(r) if r > T::zero() && r <= self.intrinsics.max_range => r,
            _ => T::nan(),
        };
        self.ranges[row * self.intrinsics.cols + col] = v;
    }

    pub fn valid_count(&self) -> usize {
        self.ranges.iter().filter(|r| r.is_finite()).count()
    }

    pub fn valid_mask(&self) -> Vec<bool> {
        self.ranges.iter().map(|r| r.is_finite()).collect()
    }

    pub fn cast<U: Real>(&self) -> RangeImage<U> {
        RangeImage {
            intrinsics: self.intrinsics.cast(),
            ranges: self.ranges.iter().map(|r| r.cast()).collect(),
        }
    }

    /// Bitwise equality, treating every invalid pixel as equal.
    pub fn same_pixels(&self, other: &Self) -> bool {
        self.intrinsics == other.intrinsics
            && self
                .ranges
                .iter()
                .zip(&other.ranges)
                .all(|(a, b)| (a.is_nan() && b.is_nan()) || a == b)
    }
}

/// Projects a sensor-frame cloud into a range image; each bin keeps its closest
/// return. Points beyond max range or outside the vertical FoV are dropped.
pub fn spherical_project<T: Real>(cloud: &[Vec3<T>], intr: &LidarIntrinsics<T>) -> RangeImage<T> {
    let mut img = RangeImage::invalid(*intr);
    for &p in cloud {
        let r = p.norm();
        if !(r > T::zero() && r <= intr.max_range) {
            continue;
        }
        let Some((row, col)) = intr.bin_of(p) else {
            continue;
        };
        let slot = &mut img.ranges[row * intr.cols + col];
        if !slot.is_finite() || r < *slot {
            *slot = r;
        }
    }
    img
}

/// One point per valid pixel, along the bin-center ray.
pub fn unproject<T: Real>(img: &RangeImage<T>) -> Vec<Vec3<T>> {
    let intr = &img.intrinsics;
    let mut out = Vec::with_capacity(img.valid_count());
    for row in 0..intr.rows {
        for col in 0..intr.cols {
            if let Some(r) = img.get(row, col) {
                out.push(intr.ray_direction(row, col) * r);
            }
        }
    }
    out
}
