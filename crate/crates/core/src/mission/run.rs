//! The three-phase mission loop: pre-deployment exploration with the aerial
//! robot as cargo, the deployment handshake, and independent exploration with
//! opportunistic keyframe exchange and regrouping.

use std::path::Path;
use std::sync::Arc;

use super::config::{CodecSpec, MissionConfig, RobotConfig};
use super::lidar::{simulate_lidar, to_f32};
use super::report::{MetricsRow, MissionReport, RegroupEvent};
use super::robot::{check_pose, Activity, Candidate, Robot};
use super::world::{generate_world, World};
use super::MissionError;
use crate::codec::{read_params_file, LosslessCodec, ScanCodec, VaeCodec};
use crate::geom::{unproject, Pose, RangeImage, Vec3};
use crate::keyframe::{integrate_image, Keyframe, PeerDecoder, RobotId};
use crate::netsim::{in_range, Channel, Link, LinkModel, Message, SendOutcome};
use crate::planner::{
    best_path_and_gain, best_vertex_and_gain, build_local_graph, deployment_trigger, select_regroup_point,
    shortest_paths, should_return, vertex_gains, volumetric_gain, PlannerParams,
};
use crate::remap::remap_f32;
use crate::voxmap::{integrate_cloud, merge, OccupancyGrid, Voxel};
use crate::wire::{put_f32s, put_f64, put_u32, Reader};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    PreDeployment,
    Deployment,
    PostDeployment,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::PreDeployment => "pre_deployment",
            Phase::Deployment => "deployment",
            Phase::PostDeployment => "post_deployment",
        }
    }
}

/// Everything a mission produces.
pub struct MissionOutcome {
    pub config: MissionConfig,
    pub world: World,
    pub report: MissionReport,
    pub maps: [OccupancyGrid<f64>; 2],
    pub merged: OccupancyGrid<f64>,
    pub sent_maps: [OccupancyGrid<f64>; 2],
    pub received_maps: [OccupancyGrid<f64>; 2],
    pub keyframes: [Vec<Keyframe>; 2],
    pub received: [Vec<Keyframe>; 2],
    pub link: Link,
    pub metrics: Vec<MetricsRow>,
    pub regroup_events: Vec<RegroupEvent>,
    /// Raw scans behind each keyframe, when scan logging is on.
    pub scans: Vec<(RobotId, u32, RangeImage<f32>)>,
    /// Position of each robot after every simulation step.
    pub trajectories: [Vec<(f64, Vec3<f64>)>; 2],
}

/// Builds the codec a robot's configuration names.
pub fn load_codec(
    cfg: &RobotConfig,
    r_max: f64,
    s_vxl: f64,
    n_z: usize,
) -> Result<Arc<dyn ScanCodec + Send + Sync>, MissionError> {
    let intr = cfg.intrinsics(r_max);
    match &cfg.codec {
        CodecSpec::Lossless => Ok(Arc::new(LosslessCodec::new(intr, s_vxl))),
        CodecSpec::Vae(path) => {
            let vae = read_params_file(path)?;
            let ci = vae.config.intrinsics;
            if ci.rows != intr.rows || ci.cols != intr.cols {
                return Err(MissionError::ConfigInvalid(format!(
                    "codec {} expects {}x{} images, robot sensor is {}x{}",
                    path.display(),
                    ci.rows,
                    ci.cols,
                    intr.rows,
                    intr.cols
                )));
            }
            if vae.latent_dim() != n_z {
                return Err(MissionError::ConfigInvalid(format!(
                    "codec {} has latent size {}, config n_z is {n_z}",
                    path.display(),
                    vae.latent_dim()
                )));
            }
            Ok(Arc::new(VaeCodec::new(vae)))
        }
    }
}

fn load_world(cfg: &MissionConfig) -> Result<World, MissionError> {
    let world = match &cfg.world {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| MissionError::Io {
                path: path.clone(),
                source,
            })?;
            World::from_file_str(&text)?
        }
        None => generate_world(&cfg.world_spec, cfg.world_seed)?,
    };
    if (world.resolution() - cfg.s_vxl).abs() > 1e-9 {
        return Err(MissionError::ConfigInvalid(format!(
            "world resolution {} differs from s_vxl {}",
            world.resolution(),
            cfg.s_vxl
        )));
    }
    if world.free_voxels().is_empty() {
        return Err(MissionError::NoFreeSpace);
    }
    check_pose(&world.grid, world.start.position)?;
    Ok(world)
}

/// Runs a mission on the configured world.
pub fn run_mission(config: &MissionConfig) -> Result<MissionOutcome, MissionError> {
    config.validate()?;
    let world = load_world(config)?;
    run_mission_in(config, world)
}

/// Runs a mission on an explicit world (its resolution must equal `s_vxl`).
pub fn run_mission_in(config: &MissionConfig, world: World) -> Result<MissionOutcome, MissionError> {
    config.validate()?;
    if (world.resolution() - config.s_vxl).abs() > 1e-9 {
        return Err(MissionError::ConfigInvalid("world resolution differs from s_vxl".into()));
    }
    check_pose(&world.grid, world.start.position)?;
    let mut m = Mission::new(config.clone(), world)?;
    m.run()?;
    m.finish()
}

const ARRIVAL_FACTOR: f64 = 2.0;
const METRICS_PERIOD: f64 = 1.0;
const EPS_T: f64 = 1e-9;

struct Mission {
    cfg: MissionConfig,
    world: World,
    robots: [Robot; 2],
    decoders: [PeerDecoder; 2],
    link: Link,
    phase: Phase,
    t: f64,
    deployment: Option<(f64, Vec3<f64>)>,
    deployment_seqs: Vec<u32>,
    trigger_gains: Option<(f64, f64)>,
    regroup_events: Vec<RegroupEvent>,
    metrics: Vec<MetricsRow>,
    scans: Vec<(RobotId, u32, RangeImage<f32>)>,
    trajectories: [Vec<(f64, Vec3<f64>)>; 2],
    timed_out: bool,
    phase_started: [f64; 3],
}

fn robot_index(id: RobotId) -> usize {
    id.index()
}

impl Mission {
    fn new(cfg: MissionConfig, world: World) -> Result<Self, MissionError> {
        let blank = world.grid.blank_like();
        let ground_codec = load_codec(&cfg.ground, cfg.r_img_max, cfg.s_vxl, cfg.n_z)?;
        let aerial_codec = load_codec(&cfg.aerial, cfg.r_img_max, cfg.s_vxl, cfg.n_z)?;
        let planner = |mut p: PlannerParams| {
            p.max_vertices = cfg.max_vertices;
            p.k_nn = cfg.k_nn;
            p.lambda = cfg.lambda;
            p
        };
        let mut ground = Robot::new(
            RobotId::Ground,
            cfg.ground.clone(),
            cfg.r_img_max,
            cfg.gain_range,
            planner(PlannerParams::ground()),
            world.start,
            &blank,
            ground_codec.clone(),
        );
        ground.activity = Activity::Explore;
        ground.start_global();
        let aerial = Robot::new(
            RobotId::Aerial,
            cfg.aerial.clone(),
            cfg.r_img_max,
            cfg.gain_range,
            planner(PlannerParams::aerial()),
            world.start,
            &blank,
            aerial_codec.clone(),
        );
        let link = Link::new(
LinkModel::new(cfg.r_c, cfg.bandwidth, 0)?,
        );
        Ok(Self {
            decoders: [
                PeerDecoder::new(RobotId::Ground, ground_codec),
                PeerDecoder::new(RobotId::Aerial, aerial_codec),
            ],
            robots: [ground, aerial],
            link,
            phase: Phase::PreDeployment,
            t: 0.0,
            deployment: None,
            deployment_seqs: Vec::new(),
            trigger_gains: None,
            regroup_events: Vec::new(),
            metrics: Vec::new(),
            scans: Vec::new(),
            trajectories: [Vec::new(), Vec::new()],
            timed_out: false,
            phase_started: [0.0, f64::NAN, f64::NAN],
            cfg,
            world,
        })
    }

    fn robot(&mut self, id: RobotId) -> &mut Robot {
        &mut self.robots[robot_index(id)]
    }

    fn distance(&self) -> f64 {
        self.robots[0].position().distance(self.robots[1].position())
    }

    fn tolerance(&self) -> f64 {
        ARRIVAL_FACTOR * self.cfg.s_vxl
    }

    fn run(&mut self) -> Result<(), MissionError> {
        let max_steps = (2.0 * self.cfg.t_b / self.cfg.dt).ceil() as u64;
        let metrics_every = ((METRICS_PERIOD / self.cfg.dt).round() as u64).max(1);
        for step in 0..=max_steps {
            self.t = step as f64 * self.cfg.dt;
            for id in RobotId::ALL {
                self.tick_robot(id)?;
                let i = robot_index(id);
                self.trajectories[i].push((self.t, self.robots[i].position()));
            }
            self.network()?;
            if step % metrics_every == 0 {
                self.record_metrics();
            }
            if self.finished() {
                self.record_metrics();
                return Ok(());
            }
        }
        self.timed_out = true;
        self.record_metrics();
        Ok(())
    }

    fn finished(&self) -> bool {
        let [g, a] = &self.robots;
        let settled = self.link.in_flight() == 0 && g.keyframes.is_complete() && a.keyframes.is_complete();
        match self.deployment {
            None => g.activity == Activity::Arrived && settled,
            Some(_) => g.activity == Activity::Arrived && a.activity == Activity::Arrived && settled,
        }
    }

    fn record_metrics(&mut self) {
        if self.metrics.last().is_some_and(|r| r.t == self.t) {
            return;
        }
        for r in &self.robots {
            self.metrics.push(MetricsRow {
                t: self.t,
                robot: r.id,
                phase: self.phase,
                explored_m3: crate::voxmap::explored_volume(&r.map),
                keyframes: r.keyframes.len(),
                bytes_tx: self.link.log.bytes(r.id, crate::netsim::EventKind::Send),
                bytes_rx: self.link.log.bytes_received(r.id),
            });
        }
    }

    fn tick_robot(&mut self, id: RobotId) -> Result<(), MissionError> {
        let t = self.t;
        let i = robot_index(id);
        if self.robots[i].activity == Activity::Cargo {
            let pose = self.robots[0].pose;
            self.robots[i].pose = pose;
            return Ok(());
        }
        let dt = self.cfg.dt;
        let footprint = self.cfg.footprint_radius;
        {
            let truth = &self.world.grid;
            let r = &mut self.robots[i];
            r.advance(truth, dt);
            r.proprioception(truth, footprint);
        }
        if t - self.robots[i].last_sense >= self.cfg.sense_interval - EPS_T {
            self.sense(id)?;
        }
        let r = &self.robots[i];
        let plan_due = match r.activity {
            Activity::Explore => r.path.is_empty() || t - r.last_plan >= self.cfg.plan_interval - EPS_T,
            Activity::Transit(_) | Activity::Return => r.path.is_empty(),
            Activity::Arrived => r.position().distance(r.regroup) > self.tolerance(),
            Activity::Waiting | Activity::Cargo => false,
        };
        if plan_due {
            self.plan(id)?;
        }
        let r = &self.robots[i];
        let exchange_due = plan_due || r.activity == Activity::Arrived;
        if exchange_due && self.phase != Phase::Deployment && r.activity != Activity::Waiting {
            self.exchange(id)?;
        }
        Ok(())
    }

    fn sense(&mut self, id: RobotId) -> Result<(), MissionError> {
        let t = self.t;
        let i = robot_index(id);
        let s_vxl = self.cfg.s_vxl;
        let log_scans = self.cfg.log_scans;
        let r = &mut self.robots[i];
        r.last_sense = t;
        let intr64 = r.intrinsics.cast::<f64>();
        let img = simulate_lidar::<rand_chacha::ChaCha8Rng>(&self.world.grid, &r.pose, &intr64, None)?;
        integrate_cloud(&mut r.map, &r.pose, &unproject(&img))?;
        let raw = to_f32(&img, &r.intrinsics);
        r.last_scan = Some(img);
        let (tau_t, tau_r) = (r.cfg.tau_t, r.cfg.tau_r);
        let codec = r.codec.clone();
        let created = r
            .keyframes
            .maybe_create(&r.pose, t, tau_t, tau_r, codec.as_ref(), &raw)?
            .cloned();
        if let Some(kf) = created {
            r.vxl_images.insert(kf.seq, remap_f32(&raw, s_vxl));
            if r.global.is_some() {
                r.anchor_position();
            }
            if log_scans {
                self.scans.push((id, kf.seq, raw));
            }
        }
        Ok(())
    }

    fn plan(&mut self, id: RobotId) -> Result<(), MissionError> {
        let i = robot_index(id);
        let t = self.t;
        {
            let r = &mut self.robots[i];
            r.last_plan = t;
            r.plans += 1;
            r.anchor_position();
        }
        match self.robots[i].activity {
            Activity::Explore => self.plan_explore(id),
            Activity::Transit(target) => self.plan_transit(id, target),
            Activity::Return | Activity::Arrived => self.plan_return(id),
            Activity::Waiting | Activity::Cargo => Ok(()),
        }
    }

    fn plan_seed(&self, id: RobotId) -> u64 {
        let r = &self.robots[robot_index(id)];
        self.cfg.seed ^ ((id.index() as u64 + 1) << 48) ^ r.plans.wrapping_mul(0x9e37_79b9_7f4a_7c15)
    }

    fn plan_explore(&mut self, id: RobotId) -> Result<(), MissionError> {
        let i = robot_index(id);
        let seed = self.plan_seed(id);
        let lambda = self.cfg.lambda;
        let r = &mut self.robots[i];
        let graph = build_local_graph(&r.map, r.position(), &r.params, seed)?;
        let gains = vertex_gains(&r.map, &graph, &r.gain_sensor);
        let sp = shortest_paths(&graph);
        let best = best_path_and_gain(&sp, &gains, lambda);

        let anchor = r.global.as_ref().expect("roadmap").current;
        let leaf = *best.path.last().expect("non-empty path");
        let mut ranked: Vec<usize> = (1..graph.len()).filter(|&v| gains[v] > 0.0 && v != leaf).collect();
        ranked.sort_by(|&a, &b| gains[b].total_cmp(&gains[a]).then(a.cmp(&b)));
        for &v in ranked.iter().take(3) {
            let path = sp.path_to(v).expect("tree vertex");
            r.remember(Candidate {
                position: graph.vertices[v],
                anchor,
                tail: graph.polyline(&path),
                tail_length: sp.dist[v],
            });
        }

        if self.phase == Phase::PreDeployment {
            let aerial = &self.robots[1];
            let ground = &self.robots[0];
            let vgraph = build_local_graph(&ground.map, ground.position(), &aerial.params, seed ^ 0xa5a5)?;
            let vgains = vertex_gains(&ground.map, &vgraph, &aerial.gain_sensor);
            let (v, phi_a) = best_vertex_and_gain(&vgains);
            if deployment_trigger(best.gain, phi_a, self.cfg.gamma_d) {
                self.trigger_gains = Some((best.gain, phi_a));
                let target = vgraph.vertices[v];
                return self.deploy(target);
            }
        }

        let r = &mut self.robots[i];
        let (waypoints, length) = if best.gain > 0.0 {
            (graph.polyline(&best.path), best.length)
        } else {
            match reposition(r, lambda) {
                Some(p) => p,
                None => return self.begin_return(id),
            }
        };
        let v = r.cfg.v_nom;
        let ret = return_length(r, ARRIVAL_FACTOR * self.cfg.s_vxl);
        let Some(ret) = ret else {
            r.set_path(waypoints);
            return Ok(());
        };
        if should_return(length / v, (ret + length) / v, self.t, self.cfg.t_b) {
            return self.begin_return(id);
        }
        self.robots[i].set_path(waypoints);
        Ok(())
    }

    fn plan_transit(&mut self, id: RobotId, target: Vec3<f64>) -> Result<(), MissionError> {
        let i = robot_index(id);
        let seed = self.plan_seed(id);
        let r = &mut self.robots[i];
        if r.plans > 1 {
            r.activity = Activity::Explore;
            return self.plan_explore(id);
        }
        let graph = build_local_graph(&r.map, r.position(), &r.params, seed)?;
        let sp = shortest_paths(&graph);
        let mut best = 0;
        for v in 0..graph.len() {
            if graph.vertices[v].distance(target) < graph.vertices[best].distance(target) {
                best = v;
            }
        }
        let path = sp.path_to(best).expect("tree vertex");
        r.set_path(graph.polyline(&path));
        if r.path.is_empty() {
            r.activity = Activity::Explore;
        }
        Ok(())
    }

    fn begin_return(&mut self, id: RobotId) -> Result<(), MissionError> {
        self.robots[robot_index(id)].activity = Activity::Return;
        self.plan_return(id)
    }

    fn plan_return(&mut self, id: RobotId) -> Result<(), MissionError> {
        let tol = self.tolerance();
        let t = self.t;
        let fallback = self.deployment.map_or(self.world.start.position, |d| d.1);
        let r = &mut self.robots[robot_index(id)];
        if r.position().distance(r.regroup) <= tol {
            r.path.clear();
            r.activity = Activity::Arrived;
            return Ok(());
        }
        r.activity = Activity::Return;
        let g = r.global.as_ref().expect("roadmap");
        let sp = g.shortest_from_current();
        let route = g
            .route_to(&r.map, &sp, r.regroup, tol)
            .or_else(|| g.route_to(&r.map, &sp, fallback, tol));
        match route {
            Some(route) => {
                r.set_path(route.waypoints);
                Ok(())
            }
            None => Err(MissionError::NoProgress {
                robot: id.name().to_string(),
                t,
            }),
        }
    }

    fn deploy(&mut self, target: Vec3<f64>) -> Result<(), MissionError> {
        let t = self.t;
        let point = self.robots[0].position();
        self.phase = Phase::Deployment;
        self.phase_started[1] = t;
        self.deployment = Some((t, point));
        for r in &mut self.robots {
            r.regroup = point;
        }
        self.robots[0].path.clear();
        {
            let pose = self.robots[0].pose;
            let a = &mut self.robots[1];
            a.pose = pose;
            a.activity = Activity::Waiting;
            a.start_global();
            a.last_plan = t;
        }
        // Co-localization: identity transform plus the dense local cloud.
        let mut handshake = Vec::new();
        for v in [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0] {
            put_f64(&mut handshake, v);
        }
        if let Some(scan) = &self.robots[0].last_scan {
            let cloud = unproject(scan);
            put_u32(&mut handshake, cloud.len() as u32);
            for p in cloud {
                put_f32s(&mut handshake, &[p.x as f32, p.y as f32, p.z as f32]);
            }
        } else {
            put_u32(&mut handshake, 0);
        }
        self.send(Channel::Handshake, RobotId::Ground, handshake)?;

        let latest: Vec<Keyframe> = self.robots[0].keyframes.latest(self.cfg.n_k).to_vec();
        for kf in latest {
            self.deployment_seqs.push(kf.seq);
            if self.send(Channel::Keyframe, RobotId::Ground, kf.serialize())? {
                let g = &mut self.robots[0];
                g.in_flight_hi = g.in_flight_hi.max(kf.seq);
            }
        }
        let mut msg = Vec::new();
        for c in target.to_array() {
            put_f64(&mut msg, c);
        }
        self.send(Channel::Target, RobotId::Ground, msg)?;
        Ok(())
    }

    /// Sends over the link; `true` when queued.
    fn send(&mut self, channel: Channel, from: RobotId, payload: Vec<u8>) -> Result<bool, MissionError> {
        let d = self.distance();
        let out = self.link.send(channel, from, payload, self.t, d)?;
        Ok(matches!(out, SendOutcome::Queued { .. }))
    }

    fn exchange(&mut self, id: RobotId) -> Result<(), MissionError> {
        if self.phase == Phase::PreDeployment && self.robots[0].activity != Activity::Arrived {
            return Ok(());
        }
        let [g, a] = &self.robots;
        if !in_range(g.position(), a.position(), self.cfg.r_c) {
            return Ok(());
        }
        let i = robot_index(id);
        let r = &self.robots[i];
        let floor = r.keyframes.watermark().max(r.in_flight_hi);
        let pending: Vec<Keyframe> = r.keyframes.unshared().iter().filter(|k| k.seq > floor).cloned().collect();
        for kf in pending {
            if self.send(Channel::Keyframe, id, kf.serialize())? {
                let r = &mut self.robots[i];
                r.in_flight_hi = r.in_flight_hi.max(kf.seq);
            }
        }
        let r = &self.robots[i];
        let deployed = self.phase == Phase::PostDeployment;
        if id == RobotId::Ground && deployed && !r.activity.is_returning() && !self.robots[1].activity.is_returning() {
            let positions: Vec<Vec3<f64>> = r.keyframes.frames().iter().map(Keyframe::position).collect();
            let g = r.global.as_ref().expect("roadmap");
            let times = g.times_to_keyframes(&r.map, &positions, r.cfg.v_nom, self.tolerance());
            let mut msg = Vec::new();
            put_u32(&mut msg, positions.len() as u32);
            for ((kf, p), tt) in r.keyframes.frames().iter().zip(&positions).zip(&times) {
                put_u32(&mut msg, kf.seq);
                for c in p.to_array() {
                    put_f64(&mut msg, c);
                }
                put_f64(&mut msg, *tt);
            }
            self.send(Channel::Times, RobotId::Ground, msg)?;
        }
        Ok(())
    }

    fn network(&mut self) -> Result<(), MissionError> {
        loop {
            let due = self.link.deliver_due(self.t);
            if due.is_empty() {
                return Ok(());
            }
            for m in due {
                self.handle(m)?;
            }
        }
    }

    fn handle(&mut self, m: Message) -> Result<(), MissionError> {
        let to = m.from.peer();
        match m.channel {
            Channel::Handshake => Ok(()),
            Channel::Keyframe => {
                let kf = Keyframe::deserialize(&m.payload)?;
                let decoder = self.decoders[robot_index(m.from)].clone();
                let r = self.robot(to);
                if r.received_seqs.insert(kf.seq) {
                    let img = decoder.decode(&kf)?;
                    integrate_image(&mut r.map, &img, &kf.pose)?;
                    integrate_image(&mut r.received_map, &img, &kf.pose)?;
                    r.received.push(kf.clone());
                }
                let mut ack = Vec::new();
                put_u32(&mut ack, kf.seq);
                self.send(Channel::Ack, to, ack)?;
                Ok(())
            }
            Channel::Ack => {
                let seq = Reader::new(&m.payload).u32().ok_or_else(|| corrupt("ack"))?;
                let r = self.robot(to);
                if r.acked.insert(seq) {
                    if let (Some(img), Some(kf)) =
                        (r.vxl_images.get(&seq), r.keyframes.frames().iter().find(|k| k.seq == seq))
                    {
                        integrate_image(&mut r.sent_map, img, &kf.pose)?;
                    }
                }
                r.keyframes.acknowledge(seq);
                if r.in_flight_hi <= r.keyframes.watermark() {
                    r.in_flight_hi = 0;
                }
                Ok(())
            }
            Channel::Target => {
                let mut rd = Reader::new(&m.payload);
                let p = read_vec3(&mut rd).ok_or_else(|| corrupt("target"))?;
                let a = self.robot(RobotId::Aerial);
                if a.activity == Activity::Waiting {
                    a.activity = Activity::Transit(p);
                    a.plans = 0;
                }
                self.phase = Phase::PostDeployment;
                self.phase_started[2] = self.t;
                Ok(())
            }
            Channel::Times => self.handle_times(&m.payload),
            Channel::Regroup => {
                let mut rd = Reader::new(&m.payload);
                let _seq = rd.u32().ok_or_else(|| corrupt("regroup"))?;
                let p = read_vec3(&mut rd).ok_or_else(|| corrupt("regroup"))?;
                let g = self.robot(RobotId::Ground);
                g.regroup = p;
                if g.activity.is_returning() {
                    return self.plan_return(RobotId::Ground);
                }
                Ok(())
            }
        }
    }

    fn handle_times(&mut self, payload: &[u8]) -> Result<(), MissionError> {
        let mut rd = Reader::new(payload);
        let n = rd.u32().ok_or_else(|| corrupt("times"))? as usize;
        let mut seqs = Vec::with_capacity(n);
        let mut positions = Vec::with_capacity(n);
        let mut t_ground = Vec::with_capacity(n);
        for _ in 0..n {
            seqs.push(rd.u32().ok_or_else(|| corrupt("times"))?);
            positions.push(read_vec3(&mut rd).ok_or_else(|| corrupt("times"))?);
            t_ground.push(rd.f64().ok_or_else(|| corrupt("times"))?);
        }
        let tol = self.tolerance();
        let fallback = self.deployment.expect("deployed").1;
        let a = &self.robots[1];
        if a.activity.is_returning() || n == 0 {
            return Ok(());
        }
        let g = a.global.as_ref().expect("roadmap");
        let t_aerial = g.times_to_keyframes(&a.map, &positions, a.cfg.v_nom, tol);
        let choice = select_regroup_point(&t_ground, &t_aerial)?;
        let (seq, point) = match choice {
            Some(q) => (seqs[q], positions[q]),
            None => (0, fallback),
        };
        self.regroup_events.push(RegroupEvent {
            t: self.t,
            seqs,
            t_ground,
            t_aerial,
            choice,
            point,
        });
        self.robots[1].regroup = point;
        let mut msg = Vec::new();
        put_u32(&mut msg, seq);
        for c in point.to_array() {
            put_f64(&mut msg, c);
        }
        self.send(Channel::Regroup, RobotId::Aerial, msg)?;
        Ok(())
    }

    fn finish(self) -> Result<MissionOutcome, MissionError> {
        let [g, a] = self.robots;
        let merged = merge(&g.map, &a.map)?;
        let report = MissionReport::build(
            &self.cfg,
            &self.world,
            [&g, &a],
            &merged,
            &self.link,
            self.t,
            self.deployment,
            &self.deployment_seqs,
            self.trigger_gains,
            &self.regroup_events,
            self.timed_out,
            self.phase_started,
        )?;
        Ok(MissionOutcome {
            report,
            maps: [g.map, a.map],
            merged,
            sent_maps: [g.sent_map, a.sent_map],
            received_maps: [g.received_map, a.received_map],
            keyframes: [g.keyframes.frames().to_vec(), a.keyframes.frames().to_vec()],
            received: [g.received, a.received],
            link: self.link,
            metrics: self.metrics,
            regroup_events: self.regroup_events,
            scans: self.scans,
            trajectories: self.trajectories,
            config: self.cfg,
            world: self.world,
        })
    }
}

fn corrupt(what: &str) -> MissionError {
    MissionError::ConfigInvalid(format!("malformed {what} message"))
}

fn read_vec3(rd: &mut Reader<'_>) -> Option<Vec3<f64>> {
    Some(Vec3::new(rd.f64()?, rd.f64()?, rd.f64()?))
}

/// Global-roadmap distance from the current vertex to the regroup point.
fn return_length(r: &Robot, tol: f64) -> Option<f64> {
    let g = r.global.as_ref()?;
    let sp = g.shortest_from_current();
    g.route_to(&r.map, &sp, r.regroup, tol).map(|route| route.length)
}

/// Best remembered vertex that still has gain, reached through the global
/// roadmap. Candidates without gain are forgotten.
fn reposition(r: &mut Robot, lambda: f64) -> Option<(Vec<Vec3<f64>>, f64)> {
    let g = r.global.as_ref()?;
    let sp = g.shortest_from_current();
    let mut best: Option<(f64, f64, usize)> = None;
    let mut keep = Vec::with_capacity(r.candidates.len());
    for (idx, c) in r.candidates.iter().enumerate() {
        let gain = if r.map.state_at(c.position) == Some(Voxel::Free) {
            volumetric_gain(&r.map, c.position, &r.gain_sensor) as f64
        } else {
            0.0
        };
        if gain <= 0.0 {
            continue;
        }
        keep.push(idx);
        let cost = sp.dist[c.anchor] + c.tail_length;
        if !cost.is_finite() {
            continue;
        }
        let score = gain * (-lambda * cost).exp();
        let better = best.is_none_or(|(s, bc, _)| score > s || (score == s && cost < bc));
        if better {
            best = Some((score, cost, idx));
        }
    }
    let chosen = best.map(|(_, cost, idx)| {
        let c = &r.candidates[idx];
        let mut way = g.graph.polyline(&sp.path_to(c.anchor).expect("finite cost"));
        way.extend(c.tail.iter().skip(1).copied());
        (way, cost)
    });
    let kept: Vec<Candidate> = keep.into_iter().map(|i| r.candidates[i].clone()).collect();
    r.candidates = kept;
    chosen
}

/// Reads a mission config file and runs it.
pub fn run_mission_file(path: &Path) -> Result<MissionOutcome, MissionError> {
    run_mission(&MissionConfig::load(path)?)
}

#[allow(dead_code)]
fn pose_of(p: Vec3<f64>) -> Pose<f64> {
    Pose::from_translation(p)
}
