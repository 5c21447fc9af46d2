//! Mission configuration and its `key = value` text format.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::world::WorldSpec;
use super::MissionError;
use crate::geom::LidarIntrinsics;

/// Which codec a robot uses for its keyframes.
#[derive(Debug, Clone, PartialEq)]
pub enum CodecSpec {
    Lossless,
    Vae(PathBuf),
}

impl CodecSpec {
    pub fn parse(text: &str) -> Result<Self, MissionError> {
        match text {
            "lossless" => Ok(Self::Lossless),
            _ => match text.strip_prefix("vae:") {
                Some(path) if !path.is_empty() => Ok(Self::Vae(PathBuf::from(path))),
                _ => Err(MissionError::ConfigInvalid(format!(
                    "codec must be `lossless` or `vae:<path>`, got `{text}`"
                ))),
            },
        }
    }

    fn render(&self) -> String {
        match self {
            Self::Lossless => "lossless".into(),
            Self::Vae(p) => format!("vae:{}", p.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotConfig {
    pub rows: usize,
    pub cols: usize,
    /// Half of the symmetric vertical field of view, degrees.
    pub half_fov_deg: f64,
    pub tau_t: f64,
    pub tau_r: f64,
    pub v_nom: f64,
    pub codec: CodecSpec,
}

impl RobotConfig {
    pub fn ground() -> Self {
        Self {
            rows: 16,
            cols: 180,
            half_fov_deg: 15.0,
            tau_t: 2.0,
            tau_r: 0.785,
            v_nom: 0.7,
            codec: CodecSpec::Lossless,
        }
    }

    pub fn aerial() -> Self {
        Self {
            rows: 32,
            cols: 128,
            half_fov_deg: 45.0,
            tau_t: 3.0,
            tau_r: 0.785,
            v_nom: 1.0,
            codec: CodecSpec::Lossless,
        }
    }

    pub fn intrinsics(&self, r_max: f64) -> LidarIntrinsics<f32> {
        LidarIntrinsics::symmetric_deg(self.rows, self.cols, self.half_fov_deg, r_max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissionConfig {
    /// World file; when absent the world is generated from `world_spec`.
    pub world: Option<PathBuf>,
    pub world_spec: WorldSpec,
    pub world_seed: u64,
    pub seed: u64,
    pub s_vxl: f64,
    pub r_img_max: f64,
    pub n_z: usize,
    pub gamma_d: f64,
    pub n_k: usize,
    pub r_c: f64,
    /// Link bandwidth in bytes per second (`inf` allowed).
    pub bandwidth: f64,
    pub t_b: f64,
    pub dt: f64,
    pub sense_interval: f64,
    pub plan_interval: f64,
    pub max_vertices: usize,
    pub k_nn: usize,
    pub lambda: f64,
    /// Radius within which unknown voxels count towards a vertex's gain.
    pub gain_range: f64,
    /// Columns around a ground robot whose support it feels, in voxels.
    pub footprint_radius: usize,
    pub log_scans: bool,
    pub ground: RobotConfig,
    pub aerial: RobotConfig,
}

impl Default for MissionConfig {
    fn default() -> Self {
        Self {
            world: None,
            world_spec: WorldSpec::default(),
            world_seed: 0,
            seed: 0,
            s_vxl: 0.4,
            r_img_max: 20.0,
            n_z: 64,
            gamma_d: 3.5,
            n_k: 10,
            r_c: 10.0,
            bandwidth: f64::INFINITY,
            t_b: 300.0,
            dt: 0.1,
            sense_interval: 0.5,
            plan_interval: 2.0,
            max_vertices: 200,
            k_nn: 5,
            lambda: 0.25,
            gain_range: 4.0,
            footprint_radius: 2,
            log_scans: false,
            ground: RobotConfig::ground(),
            aerial: RobotConfig::aerial(),
        }
    }
}

fn bad(msg: impl Into<String>) -> MissionError {
    MissionError::ConfigInvalid(msg.into())
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, MissionError> {
    value
        .parse()
        .map_err(|_| bad(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, MissionError> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(bad(format!("`{key}`: expected true or false, got `{value}`"))),
    }
}

impl MissionConfig {
    /// Parses `key = value` lines; `#` starts a comment. Relative paths are
    /// resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, MissionError> {
        Self::default().overlay(text, base)
    }

    /// Applies `key = value` lines on top of `self`, then validates.
    pub fn overlay(self, text: &str, base: &Path) -> Result<Self, MissionError> {
        let mut c = self;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("line {}: expected `key = value`", lineno + 1)))?;
            c.set(key.trim(), value.trim(), base)?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, MissionError> {
        let text = std::fs::read_to_string(path).map_err(|source| MissionError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Full-size sensors and latent size with the simulation-experiment
    /// parameters.
    pub fn full_size() -> Self {
        Self {
            n_z: 256,
            gamma_d: 3.5,
            n_k: 300,
            r_c: 50.0,
            t_b: 2000.0,
            ground: RobotConfig {
                cols: 1800,
                ..RobotConfig::ground()
            },
            aerial: RobotConfig {
                rows: 64,
                cols: 512,
                ..RobotConfig::aerial()
            },
            ..Self::default()
        }
    }

    /// Sets one `key = value` entry without validating the whole config.
    pub fn set(&mut self, key: &str, v: &str, base: &Path) -> Result<(), MissionError> {
        let resolve = |p: &str| {
            let p = PathBuf::from(p);
            if p.is_relative() {
                base.join(p)
            } else {
                p
            }
        };
        if let Some((robot, field)) = key.split_once('.') {
            let r = match robot {
                "ground" => &mut self.ground,
                "aerial" => &mut self.aerial,
                _ => return Err(bad(format!("unknown robot `{robot}` in `{key}`"))),
            };
            match field {
                "rows" => r.rows = parse_num(key, v)?,
                "cols" => r.cols = parse_num(key, v)?,
                "half_fov_deg" => r.half_fov_deg = parse_num(key, v)?,
                "tau_t" => r.tau_t = parse_num(key, v)?,
                "tau_r" => r.tau_r = parse_num(key, v)?,
                "v_nom" => r.v_nom = parse_num(key, v)?,
                "codec" => {
                    r.codec = match CodecSpec::parse(v)? {
                        CodecSpec::Vae(p) => CodecSpec::Vae(resolve(&p.to_string_lossy())),
                        other => other,
                    }
                }
                _ => return Err(bad(format!("unknown key `{key}`"))),
            }
            return Ok(());
        }
        let w = &mut self.world_spec;
        match key {
            "world" => self.world = Some(resolve(v)),
            "world_seed" => self.world_seed = parse_num(key, v)?,
            "rooms" => w.rooms = parse_num(key, v)?,
            "levels" => w.levels = parse_num(key, v)?,
            "room_min" => w.room_min = parse_num(key, v)?,
            "room_max" => w.room_max = parse_num(key, v)?,
            "level_height" => w.level_height = parse_num(key, v)?,
            "door_width" => w.door_width = parse_num(key, v)?,
            "door_height" => w.door_height = parse_num(key, v)?,
            "shaft_size" => w.shaft_size = parse_num(key, v)?,
            "pillars_per_room" => w.pillars_per_room = parse_num(key, v)?,
            "seed" => self.seed = parse_num(key, v)?,
            "s_vxl" => {
                self.s_vxl = parse_num(key, v)?;
                self.world_spec.resolution = self.s_vxl;
            }
            "r_img_max" => self.r_img_max = parse_num(key, v)?,
            "n_z" => self.n_z = parse_num(key, v)?,
            "gamma_d" => self.gamma_d = parse_num(key, v)?,
            "n_k" => self.n_k = parse_num(key, v)?,
            "r_c" => self.r_c = parse_num(key, v)?,
            "bandwidth" => self.bandwidth = parse_num(key, v)?,
            "t_b" => self.t_b = parse_num(key, v)?,
            "dt" => self.dt = parse_num(key, v)?,
            "sense_interval" => self.sense_interval = parse_num(key, v)?,
            "plan_interval" => self.plan_interval = parse_num(key, v)?,
            "max_vertices" => self.max_vertices = parse_num(key, v)?,
            "k_nn" => self.k_nn = parse_num(key, v)?,
            "lambda" => self.lambda = parse_num(key, v)?,
            "gain_range" => self.gain_range = parse_num(key, v)?,
            "footprint_radius" => self.footprint_radius = parse_num(key, v)?,
            "log_scans" => self.log_scans = parse_bool(key, v)?,
            _ => return Err(bad(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), MissionError> {
        let positive = [
            ("s_vxl", self.s_vxl),
            ("r_img_max", self.r_img_max),
            ("gamma_d", self.gamma_d),
            ("r_c", self.r_c),
            ("bandwidth", self.bandwidth),
            ("t_b", self.t_b),
            ("dt", self.dt),
            ("sense_interval", self.sense_interval),
            ("plan_interval", self.plan_interval),
            ("gain_range", self.gain_range),
            ("ground.v_nom", self.ground.v_nom),
            ("aerial.v_nom", self.aerial.v_nom),
            ("ground.tau_t", self.ground.tau_t),
            ("aerial.tau_t", self.aerial.tau_t),
            ("ground.tau_r", self.ground.tau_r),
            ("aerial.tau_r", self.aerial.tau_r),
        ];
        for (k, v) in positive {
            if !(v > 0.0) || v.is_nan() {
                return Err(bad(format!("`{k}` must be positive, got {v}")));
            }
        }
        if !self.r_c.is_finite() || !self.t_b.is_finite() || !self.r_img_max.is_finite() {
            return Err(bad("r_c, t_b and r_img_max must be finite"));
        }
        if !(self.lambda >= 0.0) {
            return Err(bad("`lambda` must be >= 0"));
        }
        for (k, v) in [("n_z", self.n_z), ("n_k", self.n_k), ("max_vertices", self.max_vertices), ("k_nn", self.k_nn)] {
            if v == 0 {
                return Err(bad(format!("`{k}` must be >= 1")));
            }
        }
        for (name, r) in [("ground", &self.ground), ("aerial", &self.aerial)] {
            if r.rows == 0 || r.cols == 0 || !(r.half_fov_deg > 0.0 && r.half_fov_deg < 90.0) {
                return Err(bad(format!("{name} sensor needs rows, cols >= 1 and 0 < half_fov_deg < 90")));
            }
        }
        if self.world.is_none() {
            self.world_spec.validate()?;
            if (self.world_spec.resolution - self.s_vxl).abs() > 1e-12 {
                return Err(bad("generated world resolution must equal s_vxl"));
            }
        }
        Ok(())
    }

    /// Text form accepted by [`MissionConfig::parse`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        if let Some(w) = &self.world {
            kv("world", w.display().to_string());
        }
        let w = &self.world_spec;
        kv("world_seed", self.world_seed.to_string());
        kv("rooms", w.rooms.to_string());
        kv("levels", w.levels.to_string());
        kv("room_min", w.room_min.to_string());
        kv("room_max", w.room_max.to_string());
        kv("level_height", w.level_height.to_string());
        kv("door_width", w.door_width.to_string());
        kv("door_height", w.door_height.to_string());
        kv("shaft_size", w.shaft_size.to_string());
        kv("pillars_per_room", w.pillars_per_room.to_string());
        kv("seed", self.seed.to_string());
        kv("s_vxl", self.s_vxl.to_string());
        kv("r_img_max", self.r_img_max.to_string());
        kv("n_z", self.n_z.to_string());
        kv("gamma_d", self.gamma_d.to_string());
        kv("n_k", self.n_k.to_string());
        kv("r_c", self.r_c.to_string());
        kv("bandwidth", self.bandwidth.to_string());
        kv("t_b", self.t_b.to_string());
        kv("dt", self.dt.to_string());
        kv("sense_interval", self.sense_interval.to_string());
        kv("plan_interval", self.plan_interval.to_string());
        kv("max_vertices", self.max_vertices.to_string());
        kv("k_nn", self.k_nn.to_string());
        kv("lambda", self.lambda.to_string());
        kv("gain_range", self.gain_range.to_string());
        kv("footprint_radius", self.footprint_radius.to_string());
        kv("log_scans", self.log_scans.to_string());
        for (name, r) in [("ground", &self.ground), ("aerial", &self.aerial)] {
            kv(&format!("{name}.rows"), r.rows.to_string());
            kv(&format!("{name}.cols"), r.cols.to_string());
            kv(&format!("{name}.half_fov_deg"), r.half_fov_deg.to_string());
            kv(&format!("{name}.tau_t"), r.tau_t.to_string());
            kv(&format!("{name}.tau_r"), r.tau_r.to_string());
            kv(&format!("{name}.v_nom"), r.v_nom.to_string());
            kv(&format!("{name}.codec"), r.codec.render());
        }
        s
    }
}
