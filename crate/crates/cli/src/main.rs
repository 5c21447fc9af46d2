//! `marsupial`: world and dataset generation, codec training and ablation,
//! mission runs and reports.
//!
//! Exit codes: 0 success, 1 I/O or other failure, 2 invalid flags or
//! configuration, 3 world without free space, 4 non-finite training loss,
//! 5 a robot could make no progress.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use marsupial_core::codec::{
    evaluate, mean_similarity, read_params_file, train, write_log_csv, write_params_file, Architecture,
    CodecConfig, CodecError, LosslessCodec, TrainOptions, Vae, VaeCodec,
};
use marsupial_core::geom::LidarIntrinsics;
use marsupial_core::mission::lidar::capture_dataset;
use marsupial_core::mission::world::{generate_world, World, WorldSpec};
use marsupial_core::mission::{run_mission, MissionConfig, MissionError, Summary};
use marsupial_core::remap::{load_dataset, write_dataset, Dataset, DatasetError};
use marsupial_core::voxmap::Voxel;

#[derive(Parser)]
#[command(name = "marsupial", version, about = "Marsupial ground/aerial exploration with learned range-image compression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a multi-level world and write it as a VOX1 file.
    GenWorld(GenWorld),
    /// Render raw and voxel-aware range-image pairs from random poses.
    GenDataset(GenDataset),
    /// Train a range-image VAE.
    TrainCodec(TrainCodec),
    /// Latent-size and voxel-size ablation on a dataset's test split.
    EvalCodec(EvalCodec),
    /// Run a deployment mission and write its logs.
    RunMission(RunMission),
    /// Print the report of a finished mission.
    Report(Report),
}

#[derive(Args)]
struct GenWorld {
    #[arg(long, default_value_t = 4)]
    rooms: usize,
    #[arg(long, default_value_t = 2)]
    levels: usize,
    /// Voxel size in meters.
    #[arg(long, default_value_t = 0.4)]
    resolution: f64,
    #[arg(long, default_value_t = 10)]
    room_min: usize,
    #[arg(long, default_value_t = 14)]
    room_max: usize,
    #[arg(long, default_value_t = 7)]
    level_height: usize,
    #[arg(long, default_value_t = 2)]
    door_width: usize,
    #[arg(long, default_value_t = 5)]
    door_height: usize,
    #[arg(long, default_value_t = 3)]
    shaft_size: usize,
    #[arg(long, default_value_t = 1)]
    pillars: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct Sensor {
    #[arg(long, default_value_t = 16)]
    rows: usize,
    #[arg(long, default_value_t = 180)]
    cols: usize,
    /// Half of the vertical field of view, degrees.
    #[arg(long, default_value_t = 15.0)]
    half_fov: f64,
    #[arg(long, default_value_t = 20.0)]
    max_range: f64,
}

impl Sensor {
    fn intrinsics(&self) -> Result<LidarIntrinsics<f32>> {
        let h = self.half_fov.to_radians() as f32;
        LidarIntrinsics::new(self.rows, self.cols, -h, h, self.max_range as f32).map_err(|e| usage(e.to_string()))
    }
}

#[derive(Args)]
struct GenDataset {
    #[arg(long)]
    world: PathBuf,
    #[arg(long)]
    poses: usize,
    #[arg(long, default_value_t = 0.4)]
    svxl: f64,
    /// Standard deviation of Gaussian range noise, meters.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[command(flatten)]
    sensor: Sensor,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct Optim {
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    #[arg(long, default_value_t = 16)]
    batch: usize,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
}

#[derive(Args)]
struct TrainCodec {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 64)]
    nz: usize,
    #[command(flatten)]
    optim: Optim,
    #[arg(long)]
    seed: u64,
    /// Parameter file; the loss log goes next to it with a `.csv` extension.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalCodec {
    #[arg(long)]
    dataset: PathBuf,
    /// Trained parameter files; latent sizes without one are trained here.
    #[arg(long, num_args = 1..)]
    params: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "8,16,32,64")]
    nz_list: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.4")]
    svxl_list: Vec<f64>,
    #[command(flatten)]
    optim: Optim,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// Small sensors and latent size for desk-scale runs.
    Desk,
    /// Sensor and latent sizes of the reference system.
    Full,
}

#[derive(Args)]
struct RunMission {
    /// `key = value` mission config, applied on top of the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Preset::Desk)]
    preset: Preset,
    /// Extra `key=value` overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Report {
    #[arg(long)]
    mission_dir: PathBuf,
    /// Render tables as Markdown.
    #[arg(long)]
    markdown: bool,
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    MissionError::ConfigInvalid(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<MissionError>() {
            match e {
                MissionError::ConfigInvalid(_) => return 2,
                MissionError::NoFreeSpace => return 3,
                MissionError::NoProgress { .. } => return 5,
                MissionError::Codec(CodecError::NonFiniteLoss { .. }) => return 4,
                MissionError::Codec(CodecError::InvalidConfig(_)) => return 2,
                _ => {}
            }
        }
        if let Some(e) = cause.downcast_ref::<CodecError>() {
            match e {
                CodecError::NonFiniteLoss { .. } => return 4,
                CodecError::InvalidConfig(_) => return 2,
                _ => {}
            }
        }
    }
    1
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::GenWorld(a) => gen_world(a),
        Command::GenDataset(a) => gen_dataset(a),
        Command::TrainCodec(a) => train_codec(a),
        Command::EvalCodec(a) => eval_codec(a),
        Command::RunMission(a) => run(a),
        Command::Report(a) => report(a),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    create_parent(path)?;
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn load_world(path: &Path) -> Result<World> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    World::from_file_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn gen_world(a: GenWorld) -> Result<()> {
    let spec = WorldSpec {
        rooms: a.rooms,
        levels: a.levels,
        resolution: a.resolution,
        room_min: a.room_min,
        room_max: a.room_max,
        level_height: a.level_height,
        door_width: a.door_width,
        door_height: a.door_height,
        shaft_size: a.shaft_size,
        pillars_per_room: a.pillars,
    };
    let world = generate_world(&spec, a.seed)?;
    write_file(&a.out, world.to_file_string())?;
    let g = &world.grid;
    let d = g.dims();
    let free = g.count(Voxel::Free);
    let voxel = g.resolution().powi(3);
    println!("wrote {}", a.out.display());
    println!("dims {} x {} x {} voxels at {} m", d[0], d[1], d[2], g.resolution());
    println!(
        "free {} voxels ({:.1} m^3), occupied {} voxels ({:.1} m^3)",
        free,
        free as f64 * voxel,
        g.count(Voxel::Occupied),
        g.count(Voxel::Occupied) as f64 * voxel
    );
    Ok(())
}

fn gen_dataset(a: GenDataset) -> Result<()> {
    if !(a.svxl > 0.0 && a.svxl.is_finite()) || !(a.noise >= 0.0 && a.noise.is_finite()) {
        return Err(usage("--svxl must be positive and --noise non-negative"));
    }
    let intr = a.sensor.intrinsics()?;
    let world = load_world(&a.world)?;
    if world.free_voxels().is_empty() {
        return Err(MissionError::NoFreeSpace.into());
    }
    if a.poses == 0 {
        fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
        eprintln!("warning: --poses 0, wrote an empty dataset directory");
        return Ok(());
    }
    let ds = capture_dataset(&world, &intr, a.poses, a.svxl, a.noise, a.seed)?;
    write_dataset(&a.out, &ds)?;
    println!(
        "wrote {} pairs ({} train, {} test) of {}x{} images to {}",
        ds.pairs.len(),
        ds.train.len(),
        ds.test.len(),
        intr.rows,
        intr.cols,
        a.out.display()
    );
    Ok(())
}

fn open_dataset(dir: &Path) -> Result<Dataset> {
    let empty_dir = fs::read_dir(dir).is_ok_and(|mut d| d.next().is_none());
    if empty_dir {
        return Err(usage(format!("dataset {} is empty", dir.display())));
    }
    match load_dataset(dir) {
        Err(DatasetError::EmptyDataset) => Err(usage(format!("dataset {} is empty", dir.display()))),
        other => other.with_context(|| format!("loading dataset {}", dir.display())),
    }
}

fn train_options(o: &Optim, seed: u64) -> Result<TrainOptions> {
    if !(o.lr > 0.0 && o.lr.is_finite()) || o.batch == 0 {
        return Err(usage("--lr and --batch must be positive"));
    }
    Ok(TrainOptions {
        learning_rate: o.lr,
        batch_size: o.batch,
        epochs: o.epochs,
        seed,
        grad_check: true,
    })
}

fn fit(ds: &Dataset, nz: usize, o: &Optim, seed: u64) -> Result<marsupial_core::codec::TrainOutcome<f32>> {
    let cfg = CodecConfig::new(ds.intrinsics, nz, &Architecture::DEFAULT_CHANNELS, o.beta, ds.s_vxl)?;
    Ok(train::<f32>(ds, cfg, &train_options(o, seed)?)?)
}

fn train_codec(a: TrainCodec) -> Result<()> {
    let ds = open_dataset(&a.dataset)?;
    let out = fit(&ds, a.nz, &a.optim, a.seed)?;
    create_parent(&a.out)?;
    write_params_file(&a.out, &out.vae)?;
    let log_path = a.out.with_extension("csv");
    write_file(&log_path, write_log_csv(&out.log))?;
    let first = out.log.iter().find(|r| r.split == "train").map(|r| r.terms.total);
    let last = out.log.iter().rev().find(|r| r.split == "train").map(|r| r.terms.total);
    println!("wrote {} and {}", a.out.display(), log_path.display());
    if let (Some(f), Some(l)) = (first, last) {
        println!("train loss {f:.6} -> {l:.6} over {} epochs", a.optim.epochs);
    }
    if let Some(g) = &out.grad_check {
        println!("gradient check max relative error {:.3e}", g.max_rel_error());
    }
    Ok(())
}

fn eval_codec(a: EvalCodec) -> Result<()> {
    if a.nz_list.is_empty() || a.svxl_list.is_empty() {
        return Err(usage("--nz-list and --svxl-list must not be empty"));
    }
    if a.svxl_list.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(usage("voxel sizes must be positive"));
    }
    let base = open_dataset(&a.dataset)?;
    let mut given: Vec<Vae<f32>> = Vec::new();
    for p in &a.params {
        let vae = read_params_file(p)?;
        let ci = vae.config.intrinsics;
        if ci.rows != base.intrinsics.rows || ci.cols != base.intrinsics.cols {
            return Err(usage(format!("{} does not match the dataset image size", p.display())));
        }
        given.push(vae);
    }

    let mut csv = String::from("codec,n_z,s_vxl,test_loss,test_recon,test_kl,similarity\n");
    let first = a.svxl_list[0];
    let ds0 = base.with_voxel_size(first);
    let lossless = LosslessCodec::new(base.intrinsics, first);
    let sim = mean_similarity(&lossless, ds0.test_pairs(), first)?;
    let _ = writeln!(csv, "lossless,,{first},,,,{sim:.6}");
    println!("lossless s_vxl={first}: similarity {sim:.4}");

    for &nz in &a.nz_list {
        for &s in &a.svxl_list {
            let ds = base.with_voxel_size(s);
            let vae = match given.iter().find(|v| v.latent_dim() == nz && (v.config.s_vxl - s).abs() < 1e-9) {
                Some(v) => v.clone(),
                None => fit(&ds, nz, &a.optim, a.seed)?.vae,
            };
            let terms = evaluate(&vae, ds.test_pairs())?;
            let sim = mean_similarity(&VaeCodec::new(vae), ds.test_pairs(), s)?;
            let _ = writeln!(
                csv,
                "vae,{nz},{s},{:.6},{:.6},{:.6},{sim:.6}",
                terms.total, terms.recon, terms.kl
            );
            println!("vae n_z={nz} s_vxl={s}: L {:.5}, similarity {sim:.4}", terms.total);
        }
    }
    write_file(&a.out, csv)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn run(a: RunMission) -> Result<()> {
    let mut cfg = match a.preset {
        Preset::Desk => MissionConfig::default(),
        Preset::Full => MissionConfig::full_size(),
    };
    if let Some(path) = &a.config {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        cfg = cfg.overlay(&text, path.parent().unwrap_or(Path::new(".")))?;
    }
    for kv in &a.overrides {
        let Some((k, v)) = kv.split_once('=') else {
            bail!(usage(format!("--set expects KEY=VALUE, got `{kv}`")));
        };
        cfg.set(k.trim(), v.trim(), Path::new("."))?;
    }
    cfg.seed = a.seed;
    cfg.validate()?;
    let outcome = run_mission(&cfg)?;
    outcome.write_to(&a.out)?;
    let r = &outcome.report;
    println!("wrote {}", a.out.display());
    match r.deployment_time {
        Some(t) => println!("aerial robot deployed at t={t:.1} s"),
        None => println!("aerial robot was not deployed"),
    }
    println!(
        "mission ended at t={:.1} s{}; explored {:.1} m^3 (ground {:.1}, aerial {:.1})",
        r.duration,
        if r.timed_out { " (timed out)" } else { "" },
        r.merged_explored_m3,
        r.robots[0].explored_m3,
        r.robots[1].explored_m3
    );
    println!(
        "merged-map similarity {:.4}; keyframe exchange {}",
        r.merged_similarity,
        if r.complete { "complete" } else { "incomplete" }
    );
    Ok(())
}

fn report(a: Report) -> Result<()> {
    let path = a.mission_dir.join("summary.txt");
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let summary = Summary::parse(&text)?;
    print!("{}", summary.render(a.markdown));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use marsupial_core::geom::{Pose, Vec3};
    use marsupial_core::remap::remap_f32;
    use marsupial_core::voxmap::OccupancyGrid;

    fn exec(args: &[&str]) -> Result<()> {
        let cli = Cli::try_parse_from(std::iter::once("marsupial").chain(args.iter().copied()))
            .map_err(|e| usage(e.to_string()))?;
        dispatch(cli.command)
    }

    fn code(args: &[&str]) -> u8 {
        exec(args).map_or_else(|e| exit_code(&e), |()| 0)
    }

    fn p(path: &Path) -> &str {
        path.to_str().unwrap()
    }

    fn small_world(dir: &Path) -> PathBuf {
        let world = dir.join("world.vox");
        exec(&["gen-world", "--rooms", "2", "--seed", "6", "--out", p(&world)]).unwrap();
        world
    }

    fn small_dataset(dir: &Path, poses: &str) -> PathBuf {
        let world = small_world(dir);
        let data = dir.join("data");
        exec(&["gen-dataset", "--world", p(&world), "--poses", poses, "--seed", "1", "--out", p(&data)]).unwrap();
        data
    }

    #[test]
    fn gen_world_is_deterministic_and_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.vox"), dir.path().join("b.vox"));
        exec(&["gen-world", "--seed", "11", "--out", p(&a)]).unwrap();
        exec(&["gen-world", "--seed", "11", "--out", p(&b)]).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

        let world = load_world(&a).unwrap();
        let [nx, ny, _] = world.grid.dims();
        assert_eq!(world.grid.state_at(world.start.position), Some(Voxel::Free));

        // The slab between the two levels is solid apart from the shaft.
        let slab = 8;
        let open = (0..nx)
            .flat_map(|x| (0..ny).map(move |y| [x, y, slab]))
            .filter(|&v| world.grid.get(v) == Voxel::Free)
            .count();
        assert!(open > 0 && open <= 9, "{open} open slab voxels");
    }

    #[test]
    fn empty_dataset_request_succeeds_but_cannot_be_trained_on() {
        let dir = tempfile::tempdir().unwrap();
        let world = small_world(dir.path());
        let data = dir.path().join("empty");
        assert_eq!(code(&["gen-dataset", "--world", p(&world), "--poses", "0", "--seed", "1", "--out", p(&data)]), 0);
        assert_eq!(fs::read_dir(&data).unwrap().count(), 0);
        let params = dir.path().join("x.vaep");
        assert_eq!(code(&["train-codec", "--dataset", p(&data), "--seed", "1", "--out", p(&params)]), 2);
    }

    #[test]
    fn dataset_pairs_hold_fresh_remaps() {
        let dir = tempfile::tempdir().unwrap();
        let ds = load_dataset(&small_dataset(dir.path(), "12")).unwrap();
        assert_eq!(ds.pairs.len(), 12);
        assert_eq!(ds.train.len() + ds.test.len(), 12);
        for pair in &ds.pairs {
            assert!(pair.vxl.same_pixels(&remap_f32(&pair.raw, ds.s_vxl)));
        }
    }

    #[test]
    fn training_is_reproducible_and_lowers_the_loss() {
        let dir = tempfile::tempdir().unwrap();
        let data = small_dataset(dir.path(), "30");
        let (a, b) = (dir.path().join("a.vaep"), dir.path().join("b.vaep"));
        for out in [&a, &b] {
            exec(&["train-codec", "--dataset", p(&data), "--nz", "8", "--epochs", "4", "--lr", "1e-3", "--seed", "2", "--out", p(out)])
                .unwrap();
        }
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
        let log = fs::read_to_string(a.with_extension("csv")).unwrap();
        assert_eq!(log, fs::read_to_string(b.with_extension("csv")).unwrap());

        let train: Vec<f64> = log
            .lines()
            .skip(1)
            .map(|l| l.split(',').collect::<Vec<_>>())
            .filter(|f| f[1] == "train")
            .map(|f| f[2].parse().unwrap())
            .collect();
        assert_eq!(train.len(), 5);
        assert!(train[4] < train[0], "{train:?}");
    }

    #[test]
    fn optimizer_defaults() {
        let cli = Cli::try_parse_from(["marsupial", "train-codec", "--dataset", "d", "--seed", "1", "--out", "o"]).unwrap();
        let Command::TrainCodec(a) = cli.command else {
            panic!("wrong command");
        };
        assert_eq!((a.nz, a.optim.epochs, a.optim.lr, a.optim.batch, a.optim.beta), (64, 20, 1e-4, 16, 1.0));
    }

    #[test]
    fn ablation_table_has_a_lossless_row_and_one_row_per_setting() {
        let dir = tempfile::tempdir().unwrap();
        let data = small_dataset(dir.path(), "20");
        let csv = dir.path().join("ablation.csv");
        exec(&[
            "eval-codec", "--dataset", p(&data), "--nz-list", "8,16", "--svxl-list", "0.4,0.8", "--epochs", "1", "--seed",
            "3", "--out", p(&csv),
        ])
        .unwrap();
        let text = fs::read_to_string(&csv).unwrap();
        let rows: Vec<&str> = text.lines().skip(1).collect();
        assert_eq!(rows.len(), 2 * 2 + 1);
        let lossless: Vec<&str> = rows[0].split(',').collect();
        assert_eq!(lossless[0], "lossless");
        assert_eq!(lossless[6].parse::<f64>().unwrap(), 1.0);
        assert!(rows[1..].iter().all(|r| r.starts_with("vae,")));
    }

    #[test]
    fn failures_map_to_exit_codes() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        let world = small_world(d);

        assert_eq!(code(&["gen-dataset", "--world", p(&world), "--poses", "3", "--svxl", "-1", "--seed", "1", "--out", p(&d.join("x"))]), 2);
        assert_eq!(code(&["run-mission", "--set", "t_b=-5", "--seed", "1", "--out", p(&d.join("m"))]), 2);
        assert_eq!(code(&["run-mission", "--set", "t_b", "--seed", "1", "--out", p(&d.join("m"))]), 2);
        assert_eq!(code(&["gen-dataset", "--world", p(&d.join("nope.vox")), "--poses", "3", "--seed", "1", "--out", p(&d.join("y"))]), 1);

        let solid = World {
            grid: OccupancyGrid::filled(Vec3::zero(), [4, 4, 4], 0.4, Voxel::Occupied).unwrap(),
            start: Pose::from_position_yaw(Vec3::splat(0.8), 0.0),
            markers: Vec::new(),
        };
        let solid_path = d.join("solid.vox");
        fs::write(&solid_path, solid.to_file_string()).unwrap();
        assert_eq!(code(&["gen-dataset", "--world", p(&solid_path), "--poses", "3", "--seed", "1", "--out", p(&d.join("z"))]), 3);

        assert_eq!(code(&["report", "--mission-dir", p(&d.join("none"))]), 1);
    }
}
