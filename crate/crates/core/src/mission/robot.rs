//! Per-robot state: pose, belief map, keyframes, roadmap and path following.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use super::config::RobotConfig;
use super::MissionError;
use crate::codec::ScanCodec;
use crate::geom::{LidarIntrinsics, Pose, RangeImage, Vec3};
use crate::keyframe::{Keyframe, KeyframeSet, RobotId};
use crate::planner::{GlobalGraph, PlanMode, PlannerParams};
use crate::voxmap::{OccupancyGrid, Voxel};

/// What a robot is doing right now.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activity {
    /// Carried by the ground robot.
    Cargo,
    /// Released, waiting for its first target.
    Waiting,
    /// Flying to the shared target before exploring.
    Transit(Vec3<f64>),
    Explore,
    Return,
    Arrived,
}

impl Activity {
    pub fn name(self) -> &'static str {
        match self {
            Activity::Cargo => "cargo",
            Activity::Waiting => "waiting",
            Activity::Transit(_) => "transit",
            Activity::Explore => "explore",
            Activity::Return => "return",
            Activity::Arrived => "arrived",
        }
    }

    pub fn is_returning(self) -> bool {
        matches!(self, Activity::Return | Activity::Arrived)
    }
}

/// A remembered informative vertex with the route from a global vertex to it.
#[derive(Debug, Clone)]
pub(crate) struct Candidate {
    pub position: Vec3<f64>,
    pub anchor: usize,
    pub tail: Vec<Vec3<f64>>,
    pub tail_length: f64,
}

pub(crate) const MAX_CANDIDATES: usize = 40;

pub struct Robot {
    pub id: RobotId,
    pub cfg: RobotConfig,
    pub intrinsics: LidarIntrinsics<f32>,
    /// Sensor model for gain evaluation (range capped).
    pub gain_sensor: LidarIntrinsics<f64>,
    pub params: PlannerParams,
    pub pose: Pose<f64>,
    pub map: OccupancyGrid<f64>,
    pub keyframes: KeyframeSet,
    pub codec: Arc<dyn ScanCodec + Send + Sync>,
    /// Acknowledged own keyframes integrated from their voxel-aware images,
    /// in acknowledgement order.
    pub sent_map: OccupancyGrid<f64>,
    pub vxl_images: BTreeMap<u32, RangeImage<f32>>,
    pub acked: BTreeSet<u32>,
    /// Peer keyframes integrated from decoded latents.
    pub received_map: OccupancyGrid<f64>,
    pub received_seqs: BTreeSet<u32>,
    pub received: Vec<Keyframe>,
    pub global: Option<GlobalGraph>,
    pub traveled: Vec<Vec3<f64>>,
    pub path: VecDeque<Vec3<f64>>,
    pub activity: Activity,
    pub last_sense: f64,
    pub last_plan: f64,
    pub plans: u64,
    pub regroup: Vec3<f64>,
    /// Highest own sequence number currently on the link.
    pub in_flight_hi: u32,
    pub last_scan: Option<RangeImage<f64>>,
    pub(crate) candidates: Vec<Candidate>,
    pub bumps: usize,
}

impl Robot {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: RobotId,
        cfg: RobotConfig,
        r_max: f64,
        gain_range: f64,
        params: PlannerParams,
        pose: Pose<f64>,
        blank: &OccupancyGrid<f64>,
        codec: Arc<dyn ScanCodec + Send + Sync>,
    ) -> Self {
        let intrinsics = cfg.intrinsics(r_max);
        let mut gain_sensor = intrinsics.cast::<f64>();
        gain_sensor.max_range = gain_range.min(r_max);
        Self {
            id,
            intrinsics,
            gain_sensor,
            params,
            pose,
            map: blank.clone(),
            keyframes: KeyframeSet::new(id),
            codec,
            sent_map: blank.clone(),
            vxl_images: BTreeMap::new(),
            acked: BTreeSet::new(),
            received_map: blank.clone(),
            received_seqs: BTreeSet::new(),
            received: Vec::new(),
            global: None,
            traveled: Vec::new(),
            path: VecDeque::new(),
            activity: Activity::Cargo,
            last_sense: f64::NEG_INFINITY,
            last_plan: f64::NEG_INFINITY,
            plans: 0,
            regroup: pose.position,
            in_flight_hi: 0,
            last_scan: None,
            candidates: Vec::new(),
            bumps: 0,
            cfg,
        }
    }

    pub fn position(&self) -> Vec3<f64> {
        self.pose.position
    }

    pub fn start_global(&mut self) {
        self.global = Some(GlobalGraph::new(
            self.params.mode,
            self.position(),
            self.params.k_nn,
            self.params.ground_clearance,
        ));
        self.traveled.clear();
    }

    /// Adds the current position to the global roadmap.
    pub fn anchor_position(&mut self) -> usize {
        let traveled = std::mem::take(&mut self.traveled);
        let pos = self.position();
        let g = self.global.as_mut().expect("active robot has a roadmap");
        let mut trail = traveled;
        if trail.last() != Some(&pos) {
            trail.push(pos);
        }
        g.advance(&self.map, &trail)
    }

    pub fn set_path(&mut self, waypoints: impl IntoIterator<Item = Vec3<f64>>) {
        let pos = self.position();
        self.path = waypoints.into_iter().skip_while(|w| w.distance(pos) < 1e-9).collect();
    }

    /// Moves up to `v_nom * dt` along the path. Motion stops before any
    /// ground-truth voxel that is not free; that voxel is then marked occupied
    /// in the belief and the path is dropped.
    pub fn advance(&mut self, truth: &OccupancyGrid<f64>, dt: f64) {
        let mut budget = self.cfg.v_nom * dt;
        let start = self.position();
        let probe = truth.resolution() * 0.25;
        while budget > 1e-12 {
            let Some(&next) = self.path.front() else {
                break;
            };
            let pos = self.position();
            let d = pos.distance(next);
            let step = if d <= budget + 1e-9 { d } else { budget };
            let target = if step >= d { next } else { pos.lerp(next, step / d) };
            let samples = (step / probe).ceil().max(1.0) as usize;
            let mut reached = pos;
            let mut blocked = false;
            for i in 1..=samples {
                let p = pos.lerp(target, i as f64 / samples as f64);
                if truth.state_at(p) != Some(Voxel::Free) {
                    if let Some(v) = self.map.voxel_of(p) {
                        self.map.set(v, Voxel::Occupied);
                    }
                    blocked = true;
                    break;
                }
                reached = p;
            }
            self.pose.position = reached;
            if reached != pos {
                self.traveled.push(reached);
            }
            if blocked {
                self.path.clear();
                self.bumps += 1;
                break;
            }
            budget -= step;
            if step >= d {
                self.path.pop_front();
            }
        }
        let moved = self.position() - start;
        if moved.x.hypot(moved.y) > 1e-9 {
            self.pose = Pose::from_position_yaw(self.position(), moved.y.atan2(moved.x));
        }
    }

    /// Self-knowledge: the robot's own voxel is free and a ground robot feels
    /// the support and body space of the columns around it.
    pub fn proprioception(&mut self, truth: &OccupancyGrid<f64>, footprint: usize) {
        let Some(v) = self.map.voxel_of(self.position()) else {
            return;
        };
        self.map.set(v, Voxel::Free);
        if self.params.mode != PlanMode::Ground2_5D || v[2] == 0 {
            return;
        }
        let r = footprint as i64;
        let h = self.params.ground_clearance as i64;
        for dy in -r..=r {
            for dx in -r..=r {
                let col = [v[0] as i64 + dx, v[1] as i64 + dy];
                for dz in -1..h {
                    let Some(idx) = truth.checked_index([col[0], col[1], v[2] as i64 + dz]) else {
                        continue;
                    };
                    let want = if dz < 0 { Voxel::Occupied } else { Voxel::Free };
                    if truth.get(idx) == want && self.map.get(idx) == Voxel::Unknown {
                        self.map.set(idx, want);
                    }
                }
            }
        }
    }

    pub(crate) fn remember(&mut self, c: Candidate) {
        self.candidates.push(c);
        if self.candidates.len() > MAX_CANDIDATES {
            let excess = self.candidates.len() - MAX_CANDIDATES;
            self.candidates.drain(..excess);
        }
    }
}

pub(crate) fn check_pose(truth: &OccupancyGrid<f64>, p: Vec3<f64>) -> Result<(), MissionError> {
    if truth.state_at(p) != Some(Voxel::Free) {
        return Err(MissionError::PoseInCollision(p.to_array()));
    }
    Ok(())
}
