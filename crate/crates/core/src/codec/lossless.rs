use super::{check_shape, CodecError, ScanCodec};
use crate::geom::{LidarIntrinsics, RangeImage};
use crate::remap::remap_f32;
use crate::wire::{put_f32s, put_u16, Reader};

/// Byte length of a lossless payload: 8-byte header, validity bitmask, one f32
/// per valid pixel.
pub fn lossless_payload_len(rows: usize, cols: usize, valid: usize) -> usize {
    8 + (rows * cols).div_ceil(8) + 4 * valid
}

/// Packs an image as u16 H, u16 W, f32 max range, an LSB-first validity mask,
/// then the valid ranges in row-major order.
pub fn lossless_encode(img: &RangeImage<f32>) -> Vec<u8> {
    let intr = &img.intrinsics;
    let mut buf =
        Vec::with_capacity(lossless_payload_len(intr.rows, intr.cols, img.valid_count()));
    put_u16(&mut buf, intr.rows);
    put_u16(&mut buf, intr.cols);
    put_f32s(&mut buf, &[intr.max_range]);
    let mut mask = vec![0u8; intr.pixel_count().div_ceil(8)];
    let mut vals = Vec::with_capacity(img.valid_count());
    for (i, &v) in img.ranges().iter().enumerate() {
        if !v.is_nan() {
            mask[i / 8] |= 1 << (i % 8);
            vals.push(v);
        }
    }
    buf.extend_from_slice(&mask);
    put_f32s(&mut buf, &vals);
    buf
}

/// Inverse of [`lossless_encode`] for a sensor with intrinsics `intr`.
pub fn lossless_decode(
    bytes: &[u8],
    intr: &LidarIntrinsics<f32>,
) -> Result<RangeImage<f32>, CodecError> {
    let corrupt = |m: &str| CodecError::CorruptPayload(m.to_string());
    let mut r = Reader::new(bytes);
    let rows = r.u16().ok_or_else(|| corrupt("truncated header"))? as usize;
    let cols = r.u16().ok_or_else(|| corrupt("truncated header"))? as usize;
    let max_range = r.f32().ok_or_else(|| corrupt("truncated header"))?;
    if rows != intr.rows || cols != intr.cols || max_range.to_bits() != intr.max_range.to_bits() {
        return Err(corrupt("header does not match sender intrinsics"));
    }
    let n = rows * cols;
    let mask = r.take(n.div_ceil(8)).ok_or_else(|| corrupt("truncated mask"))?;
    let valid = (0..n).filter(|&i| mask[i / 8] >> (i % 8) & 1 == 1).count();
    let vals = r.f32s(valid).ok_or_else(|| corrupt("truncated ranges"))?;
    if !r.finished() {
        return Err(corrupt("trailing bytes"));
    }
    let mut it = vals.into_iter();
    let ranges = (0..n)
        .map(|i| {
            if mask[i / 8] >> (i % 8) & 1 == 1 {
                it.next().expect("counted")
            } else {
                f32::NAN
            }
        })
        .collect();
    RangeImage::from_ranges(*intr, ranges).map_err(|e| corrupt(&e.to_string()))
}

/// Exact baseline: remaps the raw image and ships the voxel-aware ranges
/// unchanged. The byte payload travels packed into f32 words (zero padded).
#[derive(Debug, Clone)]
pub struct LosslessCodec {
    pub intrinsics: LidarIntrinsics<f32>,
    pub s_vxl: f64,
}

impl LosslessCodec {
    pub fn new(intrinsics: LidarIntrinsics<f32>, s_vxl: f64) -> Self {
        Self { intrinsics, s_vxl }
    }
}

pub(crate) fn bytes_to_words(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks(4)
        .map(|c| {
            let mut w = [0u8; 4];
            w[..c.len()].copy_from_slice(c);
            f32::from_bits(u32::from_le_bytes(w))
        })
        .collect()
}

impl ScanCodec for LosslessCodec {
    fn name(&self) -> String {
        "lossless".into()
    }

    fn intrinsics(&self) -> &LidarIntrinsics<f32> {
        &self.intrinsics
    }

    fn encode(&self, raw: &RangeImage<f32>) -> Result<Vec<f32>, CodecError> {
        check_shape(&self.intrinsics, raw)?;
        Ok(bytes_to_words(&lossless_encode(&remap_f32(raw, self.s_vxl))))
    }

    fn decode(&self, latent: &[f32]) -> Result<RangeImage<f32>, CodecError> {
        let bytes: Vec<u8> = latent
            .iter()
            .flat_map(|w| w.to_bits().to_le_bytes())
            .collect();
        let corrupt = |m: &str| CodecError::CorruptPayload(m.to_string());
        if bytes.len() < 8 {
            return Err(corrupt("truncated header"));
        }
        let n = self.intrinsics.pixel_count();
        let mask_len = n.div_ceil(8);
        let mask = bytes
            .get(8..8 + mask_len)
            .ok_or_else(|| corrupt("truncated mask"))?;
        let valid: usize = mask.iter().map(|b| b.count_ones() as usize).sum();
        let len = lossless_payload_len(self.intrinsics.rows, self.intrinsics.cols, valid);
        if bytes.len() != len.div_ceil(4) * 4 || bytes[len.min(bytes.len())..].iter().any(|&b| b != 0) {
            return Err(corrupt("payload length does not match mask"));
        }
        lossless_decode(&bytes[..len], &self.intrinsics)
    }
}
