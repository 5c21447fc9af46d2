//! Range-limited link between the two robots with byte-exact traffic accounting.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::geom::Vec3;
use crate::keyframe::RobotId;

#[derive(Debug, Error, PartialEq)]
pub enum NetError {
    #[error("communication range must be positive and finite, got {0}")]
    InvalidRange(f64),
    #[error("bandwidth must be positive, got {0}")]
    InvalidBandwidth(f64),
    #[error("empty payload")]
    EmptyPayload,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkModel {
    pub range: f64,
    /// Bytes per second; `f64::INFINITY` for instant delivery.
    pub bandwidth: f64,
    pub per_message_overhead: usize,
}

impl LinkModel {
    pub fn new(range: f64, bandwidth: f64, per_message_overhead: usize) -> Result<Self, NetError> {
        if !(range > 0.0) || !range.is_finite() {
            return Err(NetError::InvalidRange(range));
        }
        if !(bandwidth > 0.0) {
            return Err(NetError::InvalidBandwidth(bandwidth));
        }
        Ok(Self {
            range,
            bandwidth,
            per_message_overhead,
        })
    }

    pub fn transfer_time(&self, bytes: usize) -> f64 {
        if self.bandwidth.is_infinite() {
            0.0
        } else {
            bytes as f64 / self.bandwidth
        }
    }
}

/// Inclusive range test.
pub fn in_range(a: Vec3<f64>, b: Vec3<f64>, range: f64) -> bool {
    a.distance(b) <= range
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Channel {
    Handshake,
    Keyframe,
    Target,
    Times,
    Regroup,
    Ack,
}

impl Channel {
    pub const ALL: [Channel; 6] = [
        Channel::Handshake,
        Channel::Keyframe,
        Channel::Target,
        Channel::Times,
        Channel::Regroup,
        Channel::Ack,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Channel::Handshake => "handshake",
            Channel::Keyframe => "keyframe",
            Channel::Target => "target",
            Channel::Times => "times",
            Channel::Regroup => "regroup",
            Channel::Ack => "ack",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn direction_name(from: RobotId) -> &'static str {
    match from {
        RobotId::Ground => "g2a",
        RobotId::Aerial => "a2g",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Send,
    Deliver,
    Drop,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::Send => "send",
            EventKind::Deliver => "deliver",
            EventKind::Drop => "drop",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrafficEvent {
    pub t: f64,
    pub channel: Channel,
    pub from: RobotId,
    pub bytes: usize,
    pub kind: EventKind,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ChannelCounters {
    pub sent_bytes: u64,
    pub delivered_bytes: u64,
    pub dropped_bytes: u64,
    pub queued_bytes: u64,
    pub sent_messages: u64,
    pub delivered_messages: u64,
    pub dropped_messages: u64,
}

impl ChannelCounters {
    pub fn conserved(&self) -> bool {
        self.sent_bytes == self.delivered_bytes + self.dropped_bytes + self.queued_bytes
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrafficLog {
    pub counters: BTreeMap<Channel, ChannelCounters>,
    pub events: Vec<TrafficEvent>,
}

impl TrafficLog {
    fn record(&mut self, ev: TrafficEvent) {
        let c = self.counters.entry(ev.channel).or_default();
        let b = ev.bytes as u64;
        match ev.kind {
            EventKind::Send => {
                c.sent_bytes += b;
                c.sent_messages += 1;
                c.queued_bytes += b;
            }
            EventKind::Deliver => {
                c.delivered_bytes += b;
                c.delivered_messages += 1;
                c.queued_bytes -= b;
            }
            EventKind::Drop => {
                c.dropped_bytes += b;
                c.dropped_messages += 1;
                c.queued_bytes -= b;
            }
        }
        self.events.push(ev);
    }

    pub fn channel(&self, ch: Channel) -> ChannelCounters {
        self.counters.get(&ch).copied().unwrap_or_default()
    }

    pub fn conserved(&self) -> bool {
        self.counters.values().all(ChannelCounters::conserved)
    }

    /// Bytes of `kind` events by `from` across all channels.
    pub fn bytes(&self, from: RobotId, kind: EventKind) -> u64 {
        self.events
            .iter()
            .filter(|e| e.from == from && e.kind == kind)
            .map(|e| e.bytes as u64)
            .sum()
    }

    /// Bytes received by `robot` (delivered from its peer).
    pub fn bytes_received(&self, robot: RobotId) -> u64 {
        self.bytes(robot.peer(), EventKind::Deliver)
    }

    /// Sent bytes of one channel per whole second of simulation time.
    pub fn per_second(&self, ch: Channel) -> Vec<u64> {
        let mut out: Vec<u64> = Vec::new();
        for e in self.events.iter().filter(|e| e.channel == ch && e.kind == EventKind::Send) {
            let s = e.t.max(0.0).floor() as usize;
            if out.len() <= s {
                out.resize(s + 1, 0);
            }
            out[s] += e.bytes as u64;
        }
        out
    }

    /// `t,channel,direction,bytes,event` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,channel,direction,bytes,event\n");
        for e in &self.events {
            let _ = writeln!(
                s,
                "{:.3},{},{},{},{}",
                e.t,
                e.channel,
                direction_name(e.from),
                e.bytes,
                e.kind.name()
            );
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub channel: Channel,
    pub from: RobotId,
    pub payload: Vec<u8>,
    pub sent_at: f64,
    pub deliver_at: f64,
    seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SendOutcome {
    Queued { deliver_at: f64 },
    Dropped,
}

/// Two-way link; each direction transmits one message at a time.
#[derive(Debug, Clone)]
pub struct Link {
    pub model: LinkModel,
    pub log: TrafficLog,
    in_flight: Vec<Message>,
    busy_until: [f64; 2],
    next_seq: u64,
}

impl Link {
    pub fn new(model: LinkModel) -> Self {
        Self {
            model,
            log: TrafficLog::default(),
            in_flight: Vec::new(),
            busy_until: [f64::NEG_INFINITY; 2],
            next_seq: 0,
        }
    }

    /// Sends `payload` if the robots are within range at `t`; otherwise logs a
    /// drop and returns [`SendOutcome::Dropped`].
    pub fn send(
        &mut self,
        channel: Channel,
        from: RobotId,
        payload: Vec<u8>,
        t: f64,
        distance: f64,
    ) -> Result<SendOutcome, NetError> {
        if payload.is_empty() {
            return Err(NetError::EmptyPayload);
        }
        let bytes = payload.len() + self.model.per_message_overhead;
        self.log.record(TrafficEvent {
            t,
            channel,
            from,
            bytes,
            kind: EventKind::Send,
        });
        if distance > self.model.range {
            self.log.record(TrafficEvent {
                t,
                channel,
                from,
                bytes,
                kind: EventKind::Drop,
            });
            return Ok(SendOutcome::Dropped);
        }
        let lane = &mut self.busy_until[from.index()];
        let start = lane.max(t);
        let deliver_at = start + self.model.transfer_time(bytes);
        *lane = deliver_at;
        self.in_flight.push(Message {
            channel,
            from,
            payload,
            sent_at: t,
            deliver_at,
            seq: self.next_seq,
        });
        self.next_seq += 1;
        Ok(SendOutcome::Queued { deliver_at })
    }

    /// Removes and returns messages due by `t`, ordered by delivery time then
    /// send order.
    pub fn deliver_due(&mut self, t: f64) -> Vec<Message> {
        let (mut due, rest): (Vec<Message>, Vec<Message>) =
            std::mem::take(&mut self.in_flight).into_iter().partition(|m| m.deliver_at <= t);
        self.in_flight = rest;
        due.sort_by(|a, b| a.deliver_at.total_cmp(&b.deliver_at).then(a.seq.cmp(&b.seq)));
        for m in &due {
            self.log.record(TrafficEvent {
                t: m.deliver_at,
                channel: m.channel,
                from: m.from,
                bytes: m.payload.len() + self.model.per_message_overhead,
                kind: EventKind::Deliver,
            });
        }
        due
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight.len()
    }

    pub fn in_flight_from(&self, from: RobotId) -> usize {
        self.in_flight.iter().filter(|m| m.from == from).count()
    }
}

/// Data rates in KiB/s: continuous raw clouds, keyframed raw clouds, continuous
/// latents, keyframed latents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateTable {
    pub raw_continuous: f64,
    pub raw_keyframed: f64,
    pub latent_continuous: f64,
    pub latent_keyframed: f64,
}

pub const SENSOR_RATE_HZ: f64 = 10.0;
const KIB: f64 = 1024.0;
const POINT_BYTES: usize = 12;
const LATENT_BYTES: usize = 4;

/// Rates for an `rows × cols` sensor and `latent_dim` latents, with the
/// keyframed rows averaged over `duration` seconds of `keyframes` frames.
pub fn rate_table(rows: usize, cols: usize, latent_dim: usize, keyframes: usize, duration: f64) -> RateTable {
    let raw = (rows * cols * POINT_BYTES) as f64;
    let latent = (latent_dim * LATENT_BYTES) as f64;
    let per_mission = |frame: f64| {
        if duration > 0.0 {
            frame * keyframes as f64 / duration / KIB
        } else {
            0.0
        }
    };
    RateTable {
        raw_continuous: raw * SENSOR_RATE_HZ / KIB,
        raw_keyframed: per_mission(raw),
        latent_continuous: latent * SENSOR_RATE_HZ / KIB,
        latent_keyframed: per_mission(latent),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_rows_match_reference_arithmetic() {
        let r = rate_table(16, 1800, 256, 0, 0.0);
        assert_eq!(r.raw_continuous, 3375.0);
        assert_eq!(r.latent_continuous, 10.0);
    }

    #[test]
    fn range_boundary_is_inclusive() {
        let o = Vec3::zero();
        assert!(in_range(o, o, 10.0));
        assert!(in_range(o, Vec3::new(10.0, 0.0, 0.0), 10.0));
        assert!(!in_range(o, Vec3::new(10.001, 0.0, 0.0), 10.0));
    }

    #[test]
    fn bandwidth_delays_delivery() {
        let mut link = Link::new(LinkModel::new(10.0, 1024.0, 0).unwrap());
        let out = link
            .send(Channel::Keyframe, RobotId::Ground, vec![0; 1071], 2.0, 1.0)
            .unwrap();
        let SendOutcome::Queued { deliver_at } = out else {
            panic!("expected queued");
        };
        assert!((deliver_at - (2.0 + 1071.0 / 1024.0)).abs() < 1e-12);
        assert!(link.deliver_due(3.0).is_empty());
        assert!(link.log.conserved());
        assert_eq!(link.deliver_due(3.1).len(), 1);
        assert!(link.log.conserved());
    }

    #[test]
    fn out_of_range_drops() {
        let mut link = Link::new(LinkModel::new(5.0, f64::INFINITY, 0).unwrap());
        let out = link.send(Channel::Ack, RobotId::Aerial, vec![1], 0.0, 6.0).unwrap();
        assert_eq!(out, SendOutcome::Dropped);
        assert_eq!(link.in_flight(), 0);
        assert_eq!(link.log.channel(Channel::Ack).dropped_bytes, 1);
        assert!(link.log.conserved());
    }
}
