use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::train::EpochLog;
use super::vae::Vae;
use super::{Architecture, CodecConfig, CodecError, Stage};
use crate::geom::LidarIntrinsics;
use crate::scalar::Real;
use crate::wire::{put_f32s, put_f64, put_u16, put_u32, Reader};

const MAGIC: &[u8; 4] = b"VAEP";
const VERSION: u16 = 1;

/// `VAEP` file: magic, u16 version, config block, u32 parameter count, then
/// every tensor in declaration order as f32 little-endian.
///
/// Config block: u16 H, u16 W, f32 min/max elevation, f32 max range, u16 N_z,
/// f64 beta, f64 voxel size, u8 stage count, then per stage u16 channels and
/// u8 row/column strides.
pub fn write_params<T: Real>(vae: &Vae<T>) -> Vec<u8> {
    let c = &vae.config;
    let mut buf = Vec::with_capacity(64 + 4 * vae.params.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    put_u16(&mut buf, c.arch.rows);
    put_u16(&mut buf, c.arch.cols);
    put_f32s(
        &mut buf,
        &[
            c.intrinsics.min_elevation,
            c.intrinsics.max_elevation,
            c.intrinsics.max_range,
        ],
    );
    put_u16(&mut buf, c.arch.latent_dim);
    put_f64(&mut buf, c.beta);
    put_f64(&mut buf, c.s_vxl);
    buf.push(u8::try_from(c.arch.stages.len()).expect("stage count fits u8"));
    for s in &c.arch.stages {
        put_u16(&mut buf, s.channels);
        buf.push(s.stride.0 as u8);
        buf.push(s.stride.1 as u8);
    }
    put_u32(&mut buf, vae.params.len() as u32);
    let weights: Vec<f32> = vae.params.iter().map(|p| p.as_f64() as f32).collect();
    put_f32s(&mut buf, &weights);
    buf
}

pub fn read_params(bytes: &[u8], path: &Path) -> Result<Vae<f32>, CodecError> {
    let bad = |reason: &str| CodecError::Format {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let trunc = || bad("truncated");
    let mut r = Reader::new(bytes);
    if r.take(4) != Some(MAGIC.as_slice()) {
        return Err(bad("bad magic"));
    }
    let version = r.u16().ok_or_else(trunc)?;
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let rows = r.u16().ok_or_else(trunc)? as usize;
    let cols = r.u16().ok_or_else(trunc)? as usize;
    let fov = r.f32s(3).ok_or_else(trunc)?;
    let latent_dim = r.u16().ok_or_else(trunc)? as usize;
    let beta = r.f64().ok_or_else(trunc)?;
    let s_vxl = r.f64().ok_or_else(trunc)?;
    let stage_count = r.u8().ok_or_else(trunc)? as usize;
    let mut stages = Vec::with_capacity(stage_count);
    for _ in 0..stage_count {
        let channels = r.u16().ok_or_else(trunc)? as usize;
        let sh = r.u8().ok_or_else(trunc)? as usize;
        let sw = r.u8().ok_or_else(trunc)? as usize;
        stages.push(Stage {
            channels,
            stride: (sh, sw),
        });
    }
    let intrinsics = LidarIntrinsics::new(rows, cols, fov[0], fov[1], fov[2])
        .map_err(|e| bad(&e.to_string()))?;
    let channels: Vec<usize> = stages.iter().map(|s| s.channels).collect();
    let config = CodecConfig::new(intrinsics, latent_dim, &channels, beta, s_vxl)?;
    if config.arch
        != (Architecture {
            rows,
            cols,
            latent_dim,
            stages,
        })
    {
        return Err(bad("stage strides inconsistent with image size"));
    }
    let n = r.u32().ok_or_else(trunc)? as usize;
    let params = r.f32s(n).ok_or_else(trunc)?;
    if !r.finished() {
        return Err(bad("trailing bytes"));
    }
    Vae::from_params(config, params)
}

pub fn write_params_file<T: Real>(path: &Path, vae: &Vae<T>) -> Result<(), CodecError> {
    fs::write(path, write_params(vae)).map_err(|source| CodecError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_params_file(path: &Path) -> Result<Vae<f32>, CodecError> {
    let bytes = fs::read(path).map_err(|source| CodecError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_params(&bytes, path)
}

/// Training log as CSV `epoch,split,L,L_recon,L_KL`.
pub fn write_log_csv(log: &[EpochLog]) -> String {
    let mut out = String::from("epoch,split,L,L_recon,L_KL\n");
    for row in log {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            row.epoch, row.split, row.terms.total, row.terms.recon, row.terms.kl
        );
    }
    out
}
