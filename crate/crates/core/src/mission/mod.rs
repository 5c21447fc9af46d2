//! World model, LiDAR simulation and the three-phase deployment mission.

pub mod config;
pub mod lidar;
mod report;
mod robot;
mod run;
pub mod world;

pub use config::{CodecSpec, MissionConfig, RobotConfig};
pub use report::{known_only_in, similarity_to_truth, MetricsRow, MissionReport, RegroupEvent, RobotSummary, Summary};
pub use robot::{Activity, Robot};
pub use run::{load_codec, run_mission, run_mission_file, run_mission_in, MissionOutcome, Phase};

use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::codec::CodecError;
use crate::keyframe::KeyframeError;
use crate::netsim::NetError;
use crate::planner::PlannerError;
use crate::remap::DatasetError;
use crate::voxmap::VoxError;

#[derive(Debug, Error)]
pub enum MissionError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("world has no free space")]
    NoFreeSpace,
    #[error("sensor pose {0:?} is inside an occupied voxel")]
    PoseInCollision([f64; 3]),
    #[error("{robot} robot at t={t:.1}s has neither an informative path nor a return path")]
    NoProgress { robot: String, t: f64 },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Vox(#[from] VoxError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Keyframe(#[from] KeyframeError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    Net(#[from] NetError),
}
