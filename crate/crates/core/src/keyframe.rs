//! Keyframes: the motion-threshold creation rule, the `KFR1` wire format and
//! integration of received keyframes into an occupancy grid.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::codec::{CodecError, ScanCodec};
use crate::geom::{pose_difference, unproject, GeomError, Pose, Quat, RangeImage, Vec3};
use crate::voxmap::{integrate_cloud, OccupancyGrid, VoxError};
use crate::wire::{put_f32s, put_f64, put_u16, put_u32, Reader};

#[derive(Debug, Error)]
pub enum KeyframeError {
    #[error("bad keyframe magic")]
    BadMagic,
    #[error("keyframe record length {got} does not match expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("unknown robot id {0}")]
    UnknownRobot(u8),
    #[error("decoder belongs to {decoder} but keyframe came from {sender}")]
    DecoderMismatch { decoder: RobotId, sender: RobotId },
    #[error("latent length {got} does not match decoder expectation {expected}")]
    LatentMismatch { expected: usize, got: usize },
    #[error("invalid keyframe pose: {0}")]
    Pose(#[from] GeomError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Vox(#[from] VoxError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RobotId {
    Ground = 0,
    Aerial = 1,
}

impl RobotId {
    pub const ALL: [RobotId; 2] = [RobotId::Ground, RobotId::Aerial];

    pub fn from_u8(v: u8) -> Result<Self, KeyframeError> {
        match v {
            0 => Ok(Self::Ground),
            1 => Ok(Self::Aerial),
            other => Err(KeyframeError::UnknownRobot(other)),
        }
    }

    pub fn peer(self) -> Self {
        match self {
            Self::Ground => Self::Aerial,
            Self::Aerial => Self::Ground,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Ground => "ground",
            Self::Aerial => "aerial",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for RobotId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Keyframe {
    pub robot: RobotId,
    pub seq: u32,
    pub timestamp: f64,
    /// Sensor pose in the shared frame.
    pub pose: Pose<f32>,
    pub latent: Vec<f32>,
}

const MAGIC: &[u8; 4] = b"KFR1";
/// Bytes before the latent: magic, robot, seq, timestamp, pose, latent length.
pub const HEADER_LEN: usize = 4 + 1 + 4 + 8 + 28 + 2;

/// Encoded size of a keyframe carrying `latent_len` f32 values.
pub fn record_len(latent_len: usize) -> usize {
    HEADER_LEN + 4 * latent_len
}

impl Keyframe {
    pub fn position(&self) -> Vec3<f64> {
        self.pose.position.cast()
    }

    pub fn serialize(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(record_len(self.latent.len()));
        buf.extend_from_slice(MAGIC);
        buf.push(self.robot as u8);
        put_u32(&mut buf, self.seq);
        put_f64(&mut buf, self.timestamp);
        let (p, q) = (self.pose.position, self.pose.orientation);
        put_f32s(&mut buf, &[p.x, p.y, p.z, q.w, q.x, q.y, q.z]);
        put_u16(&mut buf, self.latent.len());
        put_f32s(&mut buf, &self.latent);
        buf
    }

    pub fn deserialize(bytes: &[u8]) -> Result<Self, KeyframeError> {
        let (kf, used) = Self::read_one(bytes)?;
        if used != bytes.len() {
            return Err(KeyframeError::LengthMismatch {
                expected: used,
                got: bytes.len(),
            });
        }
        Ok(kf)
    }

    /// Reads one record from the front of `bytes`, returning it and its length.
    pub fn read_one(bytes: &[u8]) -> Result<(Self, usize), KeyframeError> {
        let short = |expected: usize| KeyframeError::LengthMismatch {
            expected,
            got: bytes.len(),
        };
        let mut r = Reader::new(bytes);
        match r.take(4) {
            Some(m) if m == MAGIC => {}
            Some(_) => return Err(KeyframeError::BadMagic),
            None => return Err(short(HEADER_LEN)),
        }
        if bytes.len() < HEADER_LEN {
            return Err(short(HEADER_LEN));
        }
        let robot = RobotId::from_u8(r.u8().expect("header length checked"))?;
        let seq = r.u32().expect("header length checked");
        let timestamp = r.f64().expect("header length checked");
        let v = r.f32s(7).expect("header length checked");
        let n = r.u16().expect("header length checked") as usize;
        let latent = r.f32s(n).ok_or_else(|| short(record_len(n)))?;
        let pose = Pose::new(Vec3::new(v[0], v[1], v[2]), Quat::new(v[3], v[4], v[5], v[6]))?;
        Ok((
            Self {
                robot,
                seq,
                timestamp,
                pose,
                latent,
            },
            r.pos,
        ))
    }

    /// Parses a concatenation of records (the on-disk keyframe log).
    pub fn read_log(mut bytes: &[u8]) -> Result<Vec<Self>, KeyframeError> {
        let mut out = Vec::new();
        while !bytes.is_empty() {
            let (kf, used) = Self::read_one(bytes)?;
            out.push(kf);
            bytes = &bytes[used..];
        }
        Ok(out)
    }
}

/// Keyframe rule: strictly more than `tau_t` meters or `tau_r` radians of motion.
pub fn keyframe_due(current: &Pose<f64>, last: &Pose<f64>, tau_t: f64, tau_r: f64) -> bool {
    let (dt, dr) = pose_difference(current, last);
    dt > tau_t || dr > tau_r
}

/// A robot's own keyframes plus the watermark of what its peer has acknowledged.
#[derive(Debug, Clone)]
pub struct KeyframeSet {
    pub robot: RobotId,
    frames: Vec<Keyframe>,
    last_pose: Option<Pose<f64>>,
    watermark: u32,
}

impl KeyframeSet {
    pub fn new(robot: RobotId) -> Self {
        Self {
            robot,
            frames: Vec::new(),
            last_pose: None,
            watermark: 0,
        }
    }

    pub fn frames(&self) -> &[Keyframe] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Highest sequence number, 0 when empty. Sequence numbers start at 1.
    pub fn max_seq(&self) -> u32 {
        self.frames.last().map_or(0, |k| k.seq)
    }

    pub fn watermark(&self) -> u32 {
        self.watermark
    }

    pub fn last_pose(&self) -> Option<&Pose<f64>> {
        self.last_pose.as_ref()
    }

    /// Keyframes the peer has not acknowledged yet.
    pub fn unshared(&self) -> &[Keyframe] {
        let start = self.frames.partition_point(|k| k.seq <= self.watermark);
        &self.frames[start..]
    }

    /// The newest `n` keyframes in sequence order.
    pub fn latest(&self, n: usize) -> &[Keyframe] {
        &self.frames[self.frames.len().saturating_sub(n)..]
    }

    /// Raises the watermark; it never moves backwards or past `max_seq`.
    pub fn acknowledge(&mut self, seq: u32) {
        self.watermark = self.watermark.max(seq.min(self.max_seq()));
    }

    pub fn is_complete(&self) -> bool {
        self.watermark == self.max_seq()
    }

    /// Whether a keyframe is due at `current`. The first call is always due.
    pub fn due(&self, current: &Pose<f64>, tau_t: f64, tau_r: f64) -> bool {
        self.last_pose
            .as_ref()
            .is_none_or(|last| keyframe_due(current, last, tau_t, tau_r))
    }

    /// Appends a keyframe from the current raw image if the motion rule fires.
    /// The latent is the codec output for `raw`; `last_pose` moves to `current`.
    pub fn maybe_create(
        &mut self,
        current: &Pose<f64>,
        timestamp: f64,
        tau_t: f64,
        tau_r: f64,
        encoder: &dyn ScanCodec,
        raw: &RangeImage<f32>,
    ) -> Result<Option<&Keyframe>, KeyframeError> {
        if !self.due(current, tau_t, tau_r) {
            return Ok(None);
        }
        let latent = encoder.encode(raw)?;
        let pose = normalized_f32(current);
        let seq = self.max_seq() + 1;
        self.frames.push(Keyframe {
            robot: self.robot,
            seq,
            timestamp,
            pose,
            latent,
        });
        self.last_pose = Some(*current);
        Ok(self.frames.last())
    }
}

fn normalized_f32(p: &Pose<f64>) -> Pose<f32> {
    let q = p.orientation.normalized().cast::<f32>().normalized();
    Pose {
        position: p.position.cast(),
        orientation: q,
    }
}

/// A peer's decoder, tagged with the robot whose encoder produced the latents.
#[derive(Clone)]
pub struct PeerDecoder {
    pub robot: RobotId,
    pub codec: Arc<dyn ScanCodec + Send + Sync>,
}

impl fmt::Debug for PeerDecoder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PeerDecoder")
            .field("robot", &self.robot)
            .field("codec", &self.codec.name())
            .finish()
    }
}

impl PeerDecoder {
    pub fn new(robot: RobotId, codec: Arc<dyn ScanCodec + Send + Sync>) -> Self {
        Self { robot, codec }
    }

    pub fn decode(&self, kf: &Keyframe) -> Result<RangeImage<f32>, KeyframeError> {
        if kf.robot != self.robot {
            return Err(KeyframeError::DecoderMismatch {
                decoder: self.robot,
                sender: kf.robot,
            });
        }
        if let Some(n) = self.codec.fixed_latent_len() {
            if n != kf.latent.len() {
                return Err(KeyframeError::LatentMismatch {
                    expected: n,
                    got: kf.latent.len(),
                });
            }
        }
        Ok(self.codec.decode(&kf.latent)?)
    }
}

/// Integrates a voxel-aware image captured at `pose` (geometry in `f64`).
pub fn integrate_image(
    grid: &mut OccupancyGrid<f64>,
    img: &RangeImage<f32>,
    pose: &Pose<f32>,
) -> Result<(), VoxError> {
    let img = img.cast::<f64>();
    integrate_cloud(grid, &pose.cast(), &unproject(&img))
}

/// Decodes a received keyframe with the sender's decoder and integrates it.
pub fn integrate_keyframe(
    grid: &mut OccupancyGrid<f64>,
    kf: &Keyframe,
    decoder: &PeerDecoder,
) -> Result<(), KeyframeError> {
    let img = decoder.decode(kf)?;
    integrate_image(grid, &img, &kf.pose)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kf(n: usize) -> Keyframe {
        Keyframe {
            robot: RobotId::Aerial,
            seq: 7,
            timestamp: 12.25,
            pose: Pose::from_position_yaw(Vec3::new(1.5, -2.0, 0.6), 0.3f32),
            latent: (0..n).map(|i| i as f32 * 0.5 - 3.0).collect(),
        }
    }

    #[test]
    fn record_lengths() {
        assert_eq!(record_len(256), 1071);
        assert_eq!(record_len(64), 303);
        assert_eq!(kf(64).serialize().len(), 303);
    }

    #[test]
    fn round_trip_and_errors() {
        let k = kf(10);
        let bytes = k.serialize();
        assert_eq!(Keyframe::deserialize(&bytes).unwrap(), k);
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Keyframe::deserialize(&bad), Err(KeyframeError::BadMagic)));
        assert!(matches!(
            Keyframe::deserialize(&bytes[..bytes.len() - 2]),
            Err(KeyframeError::LengthMismatch { .. })
        ));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Keyframe::deserialize(&extra).is_err());
    }

    #[test]
    fn threshold_is_strict() {
        let a = Pose::<f64>::identity();
        let b = Pose::from_translation(Vec3::new(2.0, 0.0, 0.0));
        assert!(!keyframe_due(&b, &a, 2.0, 0.785));
        let c = Pose::from_translation(Vec3::new(2.01, 0.0, 0.0));
        assert!(keyframe_due(&c, &a, 2.0, 0.785));
        assert!(!keyframe_due(&a, &a, 2.0, 0.785));
        let r = Pose::from_position_yaw(Vec3::zero(), 0.8);
        assert!(keyframe_due(&r, &a, 2.0, 0.785));
    }

    #[test]
    fn watermark_tracking() {
        let mut set = KeyframeSet::new(RobotId::Ground);
        assert!(set.is_complete());
        for i in 0..4 {
            set.frames.push(Keyframe {
                robot: RobotId::Ground,
                seq: i + 1,
                ..kf(2)
            });
        }
        assert_eq!(set.unshared().len(), 4);
        set.acknowledge(2);
        assert_eq!(set.unshared()[0].seq, 3);
        set.acknowledge(1);
        assert_eq!(set.watermark(), 2);
        set.acknowledge(99);
        assert_eq!(set.watermark(), 4);
        assert!(set.is_complete());
        assert_eq!(set.latest(2).iter().map(|k| k.seq).collect::<Vec<_>>(), [3, 4]);
        assert_eq!(set.latest(10).len(), 4);
    }
}
