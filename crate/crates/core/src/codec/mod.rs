//! Range-image codecs: the variational autoencoder, its trainer, a lossless
//! baseline and the compression-ratio arithmetic.

mod io;
mod lossless;
pub mod nn;
mod train;
mod vae;

use std::io as stdio;
use std::path::PathBuf;

use thiserror::Error;

use crate::geom::{LidarIntrinsics, RangeImage};
use crate::remap::image_grid;
use crate::scalar::Real;
use crate::voxmap::occupancy_similarity;

pub use io::{read_params, read_params_file, write_log_csv, write_params, write_params_file};
pub use lossless::{lossless_decode, lossless_encode, lossless_payload_len, LosslessCodec};
pub use train::{
    evaluate, gradient_check, train, Adam, EpochLog, GradCheck, TrainOptions, TrainOutcome,
};
pub use vae::{Layout, Vae, VaeCodec};

/// Normalized decoder outputs at or above this value are treated as "no return".
pub const SATURATION: f64 = 0.999;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("image shape {got_rows}x{got_cols} does not match codec {rows}x{cols}")]
    ShapeMismatch {
        rows: usize,
        cols: usize,
        got_rows: usize,
        got_cols: usize,
    },
    #[error("vector length {got} does not match expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("all target pixels are invalid")]
    AllPixelsInvalid,
    #[error("training split is empty")]
    EmptyDataset,
    #[error("non-finite loss at epoch {epoch}, step {step}: {detail}")]
    NonFiniteLoss {
        epoch: usize,
        step: usize,
        detail: String,
    },
    #[error("corrupt payload: {0}")]
    CorruptPayload(String),
    #[error("invalid codec configuration: {0}")]
    InvalidConfig(String),
    #[error("params file {path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: stdio::Error,
    },
}

/// One encoder stage; the decoder mirrors it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stage {
    pub channels: usize,
    pub stride: (usize, usize),
}

/// Network shape: image size, per-stage channels and strides, latent size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub rows: usize,
    pub cols: usize,
    pub latent_dim: usize,
    pub stages: Vec<Stage>,
}

impl Architecture {
    pub const DEFAULT_CHANNELS: [usize; 5] = [16, 32, 32, 64, 64];

    /// Strides halve rows while at least 2 remain and columns while at least 4
    /// remain, so the bottleneck keeps at least two columns.
    pub fn for_image(
        rows: usize,
        cols: usize,
        latent_dim: usize,
        channels: &[usize],
    ) -> Result<Self, CodecError> {
        if rows == 0 || cols == 0 || latent_dim == 0 || channels.is_empty() {
            return Err(CodecError::InvalidConfig(
                "rows, cols, latent size and stage count must be positive".into(),
            ));
        }
        if channels.contains(&0) {
            return Err(CodecError::InvalidConfig("zero-channel stage".into()));
        }
        let (mut h, mut w) = (rows, cols);
        let mut stages = Vec::with_capacity(channels.len());
        for &c in channels {
            let sh = if h >= 2 { 2 } else { 1 };
            let sw = if w >= 4 { 2 } else { 1 };
            h = nn::ConvShape::out_len(h, sh);
            w = nn::ConvShape::out_len(w, sw);
            stages.push(Stage {
                channels: c,
                stride: (sh, sw),
            });
        }
        Ok(Self {
            rows,
            cols,
            latent_dim,
            stages,
        })
    }

    /// Spatial size entering each stage, followed by the bottleneck size.
    pub fn spatial_sizes(&self) -> Vec<(usize, usize)> {
        let mut sizes = vec![(self.rows, self.cols)];
        for s in &self.stages {
            let &(h, w) = sizes.last().expect("non-empty");
            sizes.push((
                nn::ConvShape::out_len(h, s.stride.0),
                nn::ConvShape::out_len(w, s.stride.1),
            ));
        }
        sizes
    }

    pub fn bottleneck_len(&self) -> usize {
        let &(h, w) = self.spatial_sizes().last().expect("non-empty");
        h * w * self.stages.last().expect("non-empty").channels
    }

    pub fn pixel_count(&self) -> usize {
        self.rows * self.cols
    }
}

/// Everything stored alongside the weights: sensor model, network shape and
/// loss weighting.
#[derive(Debug, Clone, PartialEq)]
pub struct CodecConfig {
    pub intrinsics: LidarIntrinsics<f32>,
    pub arch: Architecture,
    pub beta: f64,
    pub s_vxl: f64,
}

impl CodecConfig {
    pub fn new(
        intrinsics: LidarIntrinsics<f32>,
        latent_dim: usize,
        channels: &[usize],
        beta: f64,
        s_vxl: f64,
    ) -> Result<Self, CodecError> {
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(CodecError::InvalidConfig(format!("beta {beta} must be >= 0")));
        }
        if !(s_vxl > 0.0 && s_vxl.is_finite()) {
            return Err(CodecError::InvalidConfig(format!(
                "voxel size {s_vxl} must be > 0"
            )));
        }
        let arch = Architecture::for_image(intrinsics.rows, intrinsics.cols, latent_dim, channels)?;
        Ok(Self {
            intrinsics,
            arch,
            beta,
            s_vxl,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.arch.latent_dim
    }

    /// `beta · N_z / (H · W)`.
    pub fn beta_norm(&self) -> f64 {
        self.beta * self.arch.latent_dim as f64 / self.arch.pixel_count() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossTerms<T> {
    pub total: T,
    pub recon: T,
    pub kl: T,
}

impl<T: Real> LossTerms<T> {
    pub fn is_finite(&self) -> bool {
        self.total.is_finite() && self.recon.is_finite() && self.kl.is_finite()
    }

    pub fn cast<U: Real>(&self) -> LossTerms<U> {
        LossTerms {
            total: self.total.cast(),
            recon: self.recon.cast(),
            kl: self.kl.cast(),
        }
    }
}

/// `z = mu + sigma ⊙ epsilon`.
pub fn sample<T: Real>(mu: &[T], sigma: &[T], epsilon: &[T]) -> Result<Vec<T>, CodecError> {
    for len in [sigma.len(), epsilon.len()] {
        if len != mu.len() {
            return Err(CodecError::LengthMismatch {
                expected: mu.len(),
                got: len,
            });
        }
    }
    Ok(mu
        .iter()
        .zip(sigma)
        .zip(epsilon)
        .map(|((&m, &s), &e)| m + s * e)
        .collect())
}

/// KL divergence of `N(mu, sigma²)` from the standard normal.
pub fn kl_divergence<T: Real>(mu: &[T], sigma: &[T]) -> T {
    let half = T::lit(0.5);
    -half
        * mu.iter()
            .zip(sigma)
            .map(|(&m, &s)| {
                let var = s * s;
                T::one() + var.ln() - m * m - var
            })
            .sum::<T>()
}

/// Masked reconstruction error plus weighted KL term. `target` values at
/// positions where `valid` is false are ignored entirely.
pub fn loss<T: Real>(
    target: &[T],
    valid: &[bool],
    recon: &[T],
    mu: &[T],
    sigma: &[T],
    beta_norm: T,
) -> Result<LossTerms<T>, CodecError> {
    for len in [valid.len(), recon.len()] {
        if len != target.len() {
            return Err(CodecError::LengthMismatch {
                expected: target.len(),
                got: len,
            });
        }
    }
    if sigma.len() != mu.len() {
        return Err(CodecError::LengthMismatch {
            expected: mu.len(),
            got: sigma.len(),
        });
    }
    let mut n = 0usize;
    let mut sum = T::zero();
    for ((&t, &v), &r) in target.iter().zip(valid).zip(recon) {
        if v {
            let d = r - t;
            sum += d * d;
            n += 1;
        }
    }
    if n == 0 {
        return Err(CodecError::AllPixelsInvalid);
    }
    let recon = sum / T::from_usize_lossy(n);
    let kl = kl_divergence(mu, sigma);
    Ok(LossTerms {
        total: recon + beta_norm * kl,
        recon,
        kl,
    })
}

/// Normalized encoder input: ranges divided by max range, invalid pixels 0.
pub fn normalize_input<T: Real>(img: &RangeImage<f32>) -> Vec<T> {
    let r = img.intrinsics.max_range as f64;
    img.ranges()
        .iter()
        .map(|&v| if v.is_nan() { T::zero() } else { T::lit(v as f64 / r) })
        .collect()
}

/// Normalized target values and validity mask.
pub fn normalize_target<T: Real>(img: &RangeImage<f32>) -> (Vec<T>, Vec<bool>) {
    let r = img.intrinsics.max_range as f64;
    let mask = img.valid_mask();
    let vals = img
        .ranges()
        .iter()
        .map(|&v| if v.is_nan() { T::zero() } else { T::lit(v as f64 / r) })
        .collect();
    (vals, mask)
}

/// Raw point cloud bytes (three f32 per pixel) over latent bytes (one f32 per
/// latent dimension).
pub fn compression_ratio<T: Real>(intr: &LidarIntrinsics<T>, latent_dim: usize) -> f64 {
    (intr.rows * intr.cols * 12) as f64 / (latent_dim * 4) as f64
}

/// A codec turning raw range images into f32 latent vectors and back into
/// voxel-aware reconstructions.
pub trait ScanCodec {
    fn name(&self) -> String;
    fn intrinsics(&self) -> &LidarIntrinsics<f32>;
    /// Latent length when it does not depend on the image.
    fn fixed_latent_len(&self) -> Option<usize> {
        None
    }
    fn encode(&self, raw: &RangeImage<f32>) -> Result<Vec<f32>, CodecError>;
    fn decode(&self, latent: &[f32]) -> Result<RangeImage<f32>, CodecError>;
}

/// Occupancy similarity between the sensor-frame maps built from a target
/// image and from its reconstruction.
pub fn map_similarity(target: &RangeImage<f32>, recon: &RangeImage<f32>, s_vxl: f64) -> f64 {
    let a = image_grid(&target.cast::<f64>(), s_vxl);
    let b = image_grid(&recon.cast::<f64>(), s_vxl);
    occupancy_similarity(&a, &b).expect("grids share extent and resolution")
}

/// Mean [`map_similarity`] of `codec` over the pairs (raw in, voxel-aware target).
pub fn mean_similarity<'a>(
    codec: &dyn ScanCodec,
    pairs: impl IntoIterator<Item = &'a crate::remap::Pair>,
    s_vxl: f64,
) -> Result<f64, CodecError> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for p in pairs {
        let recon = codec.decode(&codec.encode(&p.raw)?)?;
        sum += map_similarity(&p.vxl, &recon, s_vxl);
        n += 1;
    }
    if n == 0 {
        return Err(CodecError::EmptyDataset);
    }
    Ok(sum / n as f64)
}

pub(crate) fn check_shape(
    intr: &LidarIntrinsics<f32>,
    img: &RangeImage<f32>,
) -> Result<(), CodecError> {
    if img.intrinsics.rows != intr.rows || img.intrinsics.cols != intr.cols {
        return Err(CodecError::ShapeMismatch {
            rows: intr.rows,
            cols: intr.cols,
            got_rows: img.intrinsics.rows,
            got_cols: img.intrinsics.cols,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_presets() {
        let g = LidarIntrinsics::<f64>::symmetric_deg(16, 1800, 15.0, 100.0);
        let a = LidarIntrinsics::<f64>::symmetric_deg(64, 512, 45.0, 100.0);
        assert_eq!(compression_ratio(&g, 256), 337.5);
        assert_eq!(compression_ratio(&a, 256), 384.0);
        assert_eq!(compression_ratio(&g, 16 * 1800 * 3), 1.0);
    }

    #[test]
    fn kl_at_prior_is_zero() {
        assert_eq!(kl_divergence(&[0.0f64; 4], &[1.0; 4]), 0.0);
        assert!(kl_divergence(&[0.1f64, 0.0], &[1.0, 1.0]) > 0.0);
        assert!(kl_divergence(&[0.0f64], &[0.9]) > 0.0);
    }

    #[test]
    fn loss_single_valid_pixel() {
        let t = [0.2, 123.0, -5.0];
        let v = [true, false, false];
        let r = [0.7, 0.0, 0.0];
        let l = loss(&t, &v, &r, &[0.0], &[1.0], 0.5).unwrap();
        assert!((l.recon - 0.25f64).abs() < 1e-15);
        assert_eq!(l.kl, 0.0);
        assert!(matches!(
            loss(&t, &[false; 3], &r, &[0.0], &[1.0], 0.5),
            Err(CodecError::AllPixelsInvalid)
        ));
    }

    #[test]
    fn sample_checks_lengths() {
        assert_eq!(sample(&[1.0, 2.0], &[0.5, 2.0], &[0.0, 0.0]).unwrap(), vec![1.0, 2.0]);
        assert_eq!(sample(&[1.0], &[2.0], &[-1.0]).unwrap(), vec![-1.0]);
        assert!(sample(&[1.0], &[1.0, 1.0], &[0.0]).is_err());
    }

    #[test]
    fn desk_bottlenecks() {
        let g = Architecture::for_image(16, 180, 64, &Architecture::DEFAULT_CHANNELS).unwrap();
        assert_eq!(*g.spatial_sizes().last().unwrap(), (1, 6));
        let a = Architecture::for_image(32, 128, 64, &Architecture::DEFAULT_CHANNELS).unwrap();
        assert_eq!(*a.spatial_sizes().last().unwrap(), (1, 4));
        let p = Architecture::for_image(16, 1800, 256, &Architecture::DEFAULT_CHANNELS).unwrap();
        assert_eq!(*p.spatial_sizes().last().unwrap(), (1, 57));
    }
}
