//! Task-driven range-image compression and a deterministic simulator for
//! collaborative exploration by a marsupial ground/aerial robot team.

pub mod geom;
pub mod keyframe;
pub mod mission;
pub mod netsim;
pub mod planner;
pub mod codec;
pub mod remap;
pub mod scalar;
pub mod voxmap;
mod wire;

pub use scalar::Real;

pub type Vec3d = geom::Vec3<f64>;
pub type Pose64 = geom::Pose<f64>;
pub type Intrinsics64 = geom::LidarIntrinsics<f64>;
pub type Grid64 = voxmap::OccupancyGrid<f64>;
