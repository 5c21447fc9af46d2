//! Mission summary, metrics rows, and the on-disk output tree.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::config::MissionConfig;
use super::robot::Robot;
use super::run::{MissionOutcome, Phase};
use super::world::World;
use super::MissionError;
use crate::geom::Vec3;
use crate::keyframe::{Keyframe, RobotId};
use crate::netsim::{rate_table, Channel, Link, RateTable};
use crate::remap::encode_scan;
use crate::voxmap::{explored_volume, occupancy_similarity, OccupancyGrid, Voxel};

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub t: f64,
    pub robot: RobotId,
    pub phase: Phase,
    pub explored_m3: f64,
    pub keyframes: usize,
    pub bytes_tx: u64,
    pub bytes_rx: u64,
}

/// One regroup-point selection by the aerial robot.
#[derive(Debug, Clone, PartialEq)]
pub struct RegroupEvent {
    pub t: f64,
    pub seqs: Vec<u32>,
    pub t_ground: Vec<f64>,
    pub t_aerial: Vec<f64>,
    /// Index into `seqs`; `None` means the deployment point was used.
    pub choice: Option<usize>,
    pub point: Vec3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotSummary {
    pub explored_m3: f64,
    pub keyframes: usize,
    pub received: usize,
    pub watermark: u32,
    pub complete: bool,
    pub bumps: usize,
    pub plans: u64,
    pub final_activity: &'static str,
    pub final_position: Vec3<f64>,
    pub rates: RateTable,
    pub image: (usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissionReport {
    pub duration: f64,
    pub timed_out: bool,
    pub deployed: bool,
    pub deployment_time: Option<f64>,
    pub deployment_point: Option<Vec3<f64>>,
    pub deployment_keyframes: usize,
    pub trigger_gains: Option<(f64, f64)>,
    /// Start times of pre-deployment, deployment and post-deployment.
    pub phase_started: [f64; 3],
    pub robots: [RobotSummary; 2],
    pub merged_explored_m3: f64,
    pub merged_similarity: f64,
    /// Keyframe exchange is complete in both directions.
    pub complete: bool,
    pub regroup_events: usize,
    pub traffic: Vec<(Channel, u64, u64, u64)>,
    pub bytes_conserved: bool,
}

fn known_truth(truth: &OccupancyGrid<f64>, known: &OccupancyGrid<f64>) -> OccupancyGrid<f64> {
    let mut out = truth.blank_like();
    for (i, &c) in known.cells().iter().enumerate() {
        if c.is_known() {
            out.set(out.unlinear(i), truth.get(truth.unlinear(i)));
        }
    }
    out
}

/// Occupancy similarity of `map` against ground truth restricted to the
/// voxels `map` knows.
pub fn similarity_to_truth(map: &OccupancyGrid<f64>, truth: &OccupancyGrid<f64>) -> Result<f64, MissionError> {
    Ok(occupancy_similarity(map, &known_truth(truth, map))?)
}

impl MissionReport {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn build(
        cfg: &MissionConfig,
        world: &World,
        robots: [&Robot; 2],
        merged: &OccupancyGrid<f64>,
        link: &Link,
        duration: f64,
        deployment: Option<(f64, Vec3<f64>)>,
        deployment_seqs: &[u32],
        trigger_gains: Option<(f64, f64)>,
        regroup_events: &[RegroupEvent],
        timed_out: bool,
        phase_started: [f64; 3],
    ) -> Result<Self, MissionError> {
        let summary = |r: &Robot| RobotSummary {
            explored_m3: explored_volume(&r.map),
            keyframes: r.keyframes.len(),
            received: r.received.len(),
            watermark: r.keyframes.watermark(),
            complete: r.keyframes.is_complete(),
            bumps: r.bumps,
            plans: r.plans,
            final_activity: r.activity.name(),
            final_position: r.position(),
            rates: rate_table(r.cfg.rows, r.cfg.cols, cfg.n_z, r.keyframes.len(), duration),
            image: (r.cfg.rows, r.cfg.cols),
        };
        let traffic = Channel::ALL
            .iter()
            .map(|&ch| {
                let c = link.log.channel(ch);
                (ch, c.sent_bytes, c.delivered_bytes, c.dropped_bytes)
            })
            .collect();
        Ok(Self {
            duration,
            timed_out,
            deployed: deployment.is_some(),
            deployment_time: deployment.map(|d| d.0),
            deployment_point: deployment.map(|d| d.1),
            deployment_keyframes: deployment_seqs.len(),
            trigger_gains,
            phase_started,
            robots: [summary(robots[0]), summary(robots[1])],
            merged_explored_m3: explored_volume(merged),
            merged_similarity: similarity_to_truth(merged, &world.grid)?,
            complete: robots.iter().all(|r| r.keyframes.is_complete()),
            regroup_events: regroup_events.len(),
            traffic,
            bytes_conserved: link.log.conserved(),
        })
    }

    /// Flat `key = value` text, one entry per line, in a fixed order.
    pub fn to_summary(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("duration_s", format!("{:.3}", self.duration));
        kv("timed_out", self.timed_out.to_string());
        kv("deployed", self.deployed.to_string());
        kv("deployment_time_s", opt(self.deployment_time.map(|t| format!("{t:.3}"))));
        kv("deployment_point", opt(self.deployment_point.map(fmt_vec)));
        kv("deployment_keyframes", self.deployment_keyframes.to_string());
        kv(
            "trigger_gains",
            opt(self.trigger_gains.map(|(g, a)| format!("{g:.6} {a:.6}"))),
        );
        for (phase, t) in PHASES.iter().zip(self.phase_started) {
            kv(&format!("phase.{phase}.start_s"), fmt_time(t));
        }
        for (id, r) in RobotId::ALL.iter().zip(&self.robots) {
            let p = id.name();
            kv(&format!("{p}.image"), format!("{}x{}", r.image.0, r.image.1));
            kv(&format!("{p}.explored_m3"), format!("{:.3}", r.explored_m3));
            kv(&format!("{p}.keyframes"), r.keyframes.to_string());
            kv(&format!("{p}.received"), r.received.to_string());
            kv(&format!("{p}.watermark"), r.watermark.to_string());
            kv(&format!("{p}.complete"), r.complete.to_string());
            kv(&format!("{p}.bumps"), r.bumps.to_string());
            kv(&format!("{p}.plans"), r.plans.to_string());
            kv(&format!("{p}.final_activity"), r.final_activity.to_string());
            kv(&format!("{p}.final_position"), fmt_vec(r.final_position));
            let rt = &r.rates;
            kv(&format!("{p}.rate.raw_10hz_kibps"), format!("{:.3}", rt.raw_continuous));
            kv(&format!("{p}.rate.raw_keyframed_kibps"), format!("{:.3}", rt.raw_keyframed));
            kv(&format!("{p}.rate.latent_10hz_kibps"), format!("{:.3}", rt.latent_continuous));
            kv(&format!("{p}.rate.latent_keyframed_kibps"), format!("{:.3}", rt.latent_keyframed));
        }
        kv("merged.explored_m3", format!("{:.3}", self.merged_explored_m3));
        kv("merged.similarity", format!("{:.6}", self.merged_similarity));
        kv("exchange_complete", self.complete.to_string());
        kv("regroup_events", self.regroup_events.to_string());
        for (ch, sent, delivered, dropped) in &self.traffic {
            kv(&format!("traffic.{ch}"), format!("{sent} {delivered} {dropped}"));
        }
        kv("traffic.conserved", self.bytes_conserved.to_string());
        s
    }
}

const PHASES: [&str; 3] = ["pre_deployment", "deployment", "post_deployment"];

fn opt(v: Option<String>) -> String {
    v.unwrap_or_else(|| "none".into())
}

fn fmt_time(t: f64) -> String {
    if t.is_finite() {
        format!("{t:.3}")
    } else {
        "none".into()
    }
}

fn fmt_vec(p: Vec3<f64>) -> String {
    format!("{:.3} {:.3} {:.3}", p.x, p.y, p.z)
}

/// Parsed `summary.txt`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Summary {
    pub entries: BTreeMap<String, String>,
    order: Vec<String>,
}

impl Summary {
    pub fn parse(text: &str) -> Result<Self, MissionError> {
        let mut out = Summary::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| MissionError::ConfigInvalid(format!("summary line {}: expected key = value", n + 1)))?;
            let k = k.trim().to_string();
            out.order.push(k.clone());
            out.entries.insert(k, v.trim().to_string());
        }
        Ok(out)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    fn val(&self, key: &str) -> &str {
        self.get(key).unwrap_or("-")
    }

    /// Human-readable report; `markdown` renders the tables as pipe tables.
    pub fn render(&self, markdown: bool) -> String {
        let mut s = String::new();
        let table = |s: &mut String, title: &str, header: &[&str], rows: Vec<Vec<String>>| {
            if markdown {
                let _ = writeln!(s, "### {title}\n");
                let _ = writeln!(s, "| {} |", header.join(" | "));
                let _ = writeln!(s, "|{}", "---|".repeat(header.len()));
                for r in rows {
                    let _ = writeln!(s, "| {} |", r.join(" | "));
                }
            } else {
                let _ = writeln!(s, "{title}");
                let width: Vec<usize> = (0..header.len())
                    .map(|c| rows.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap_or(0))
                    .collect();
                let line = |cells: Vec<&str>| {
                    cells
                        .iter()
                        .zip(&width)
                        .map(|(c, w)| format!("{c:<w$}"))
                        .collect::<Vec<_>>()
                        .join("  ")
                };
                let _ = writeln!(s, "  {}", line(header.to_vec()).trim_end());
                for r in &rows {
                    let _ = writeln!(s, "  {}", line(r.iter().map(String::as_str).collect()).trim_end());
                }
            }
            let _ = writeln!(s);
        };

        let robots = ["ground", "aerial"];
        let rate_rows = [
            ("Raw point cloud (10 Hz)", "rate.raw_10hz_kibps"),
            ("Keyframed raw point cloud", "rate.raw_keyframed_kibps"),
            ("Latent (10 Hz)", "rate.latent_10hz_kibps"),
            ("Keyframed latent", "rate.latent_keyframed_kibps"),
        ];
        let rows = rate_rows
            .iter()
            .map(|(name, key)| {
                let mut r = vec![name.to_string()];
                r.extend(robots.iter().map(|p| self.val(&format!("{p}.{key}")).to_string()));
                r
            })
            .collect();
        table(&mut s, "Data rates (KiB/s)", &["Transmission", "Ground", "Aerial"], rows);

        let robot_rows = [
            ("Image", "image"),
            ("Explored volume (m^3)", "explored_m3"),
            ("Keyframes created", "keyframes"),
            ("Keyframes received", "received"),
            ("Exchange complete", "complete"),
            ("Final activity", "final_activity"),
        ];
        let rows = robot_rows
            .iter()
            .map(|(name, key)| {
                let mut r = vec![name.to_string()];
                r.extend(robots.iter().map(|p| self.val(&format!("{p}.{key}")).to_string()));
                r
            })
            .collect();
        table(&mut s, "Robots", &["", "Ground", "Aerial"], rows);

        let start = |p: &str| self.val(&format!("phase.{p}.start_s")).parse::<f64>().ok();
        let end = self.val("duration_s").parse::<f64>().ok();
        let starts: Vec<Option<f64>> = PHASES.iter().map(|p| start(p)).collect();
        let rows = PHASES
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let next = starts[i + 1..].iter().flatten().next().copied().or(end);
                let dur = match (starts[i], next) {
                    (Some(a), Some(b)) => format!("{:.3}", b - a),
                    _ => "-".into(),
                };
                vec![p.to_string(), self.val(&format!("phase.{p}.start_s")).to_string(), dur]
            })
            .collect();
        table(&mut s, "Phases", &["Phase", "Start (s)", "Duration (s)"], rows);

        let rows = [
            ("Duration (s)", "duration_s"),
            ("Deployed", "deployed"),
            ("Deployment time (s)", "deployment_time_s"),
            ("Keyframes sent at deployment", "deployment_keyframes"),
            ("Merged explored volume (m^3)", "merged.explored_m3"),
            ("Merged-map similarity", "merged.similarity"),
            ("Regroup selections", "regroup_events"),
            ("Timed out", "timed_out"),
        ]
        .iter()
        .map(|(name, key)| vec![name.to_string(), self.val(key).to_string()])
        .collect();
        table(&mut s, "Mission", &["", "Value"], rows);
        s
    }
}

fn write(dir: &Path, name: &str, bytes: impl AsRef<[u8]>) -> Result<(), MissionError> {
    let path = dir.join(name);
    std::fs::write(&path, bytes).map_err(|source| MissionError::Io { path, source })
}

fn keyframe_log(frames: &[Keyframe]) -> Vec<u8> {
    frames.iter().flat_map(Keyframe::serialize).collect()
}

fn trajectory_csv(tracks: &[Vec<(f64, Vec3<f64>)>; 2]) -> String {
    let mut s = String::from("t,robot,x,y,z\n");
    for (id, track) in RobotId::ALL.iter().zip(tracks) {
        for (t, p) in track {
            let _ = writeln!(s, "{t:.3},{},{:.4},{:.4},{:.4}", id.name(), p.x, p.y, p.z);
        }
    }
    s
}

fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut s = String::from("t,robot,phase,explored_m3,keyframes,bytes_tx,bytes_rx\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{:.3},{},{},{:.3},{},{},{}",
            r.t,
            r.robot.name(),
            r.phase.name(),
            r.explored_m3,
            r.keyframes,
            r.bytes_tx,
            r.bytes_rx
        );
    }
    s
}

fn regroup_csv(events: &[RegroupEvent]) -> String {
    let join = |v: Vec<String>| v.join(";");
    let mut s = String::from("t,choice,seq,x,y,z,t_ground,t_aerial\n");
    for e in events {
        let (choice, seq) = match e.choice {
            Some(q) => (q.to_string(), e.seqs[q].to_string()),
            None => ("none".into(), "none".into()),
        };
        let _ = writeln!(
            s,
            "{:.3},{choice},{seq},{:.6},{:.6},{:.6},{},{}",
            e.t,
            e.point.x,
            e.point.y,
            e.point.z,
            join(e.t_ground.iter().map(|t| format!("{t:.6}")).collect()),
            join(e.t_aerial.iter().map(|t| format!("{t:.6}")).collect()),
        );
    }
    s
}

impl MissionOutcome {
    /// Writes every log, map and the summary into `dir` (created if missing).
    pub fn write_to(&self, dir: &Path) -> Result<(), MissionError> {
        std::fs::create_dir_all(dir).map_err(|source| MissionError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        write(dir, "config.txt", self.config.to_text())?;
        write(dir, "metrics.csv", metrics_csv(&self.metrics))?;
        write(dir, "traffic.csv", self.link.log.to_csv())?;
        write(dir, "regroup.csv", regroup_csv(&self.regroup_events))?;
        write(dir, "trajectory.csv", trajectory_csv(&self.trajectories))?;
        for id in RobotId::ALL {
            let i = id.index();
            let n = id.name();
            write(dir, &format!("{n}.kfr"), keyframe_log(&self.keyframes[i]))?;
            write(dir, &format!("{n}_received.kfr"), keyframe_log(&self.received[i]))?;
            write(dir, &format!("{n}_map.vox"), self.maps[i].to_vox_string())?;
            write(dir, &format!("received_by_{n}.vox"), self.received_maps[i].to_vox_string())?;
            write(dir, &format!("{n}_acked.vox"), self.sent_maps[i].to_vox_string())?;
        }
        write(dir, "merged_map.vox", self.merged.to_vox_string())?;
        write(dir, "summary.txt", self.report.to_summary())?;
        if !self.scans.is_empty() {
            let scans = dir.join("scans");
            std::fs::create_dir_all(&scans).map_err(|source| MissionError::Io {
                path: scans.clone(),
                source,
            })?;
            for (id, seq, img) in &self.scans {
                write(&scans, &format!("{}_{seq:05}.rscn", id.name()), encode_scan(img))?;
            }
        }
        Ok(())
    }
}

/// Voxels that are known in `a` but unknown in `b`.
pub fn known_only_in(a: &OccupancyGrid<f64>, b: &OccupancyGrid<f64>) -> usize {
    a.cells()
        .iter()
        .zip(b.cells())
        .filter(|(x, y)| x.is_known() && **y == Voxel::Unknown)
        .count()
}
