//! Graph-based exploration planning.
//!
//! A local roadmap is sampled around the robot, searched with Dijkstra, and
//! scored with a discounted volumetric gain. The global roadmap grows from the
//! robot's visited positions and answers return and regroup queries.

mod gain;
mod global;
mod graph;

pub use gain::{best_path_and_gain, best_vertex_and_gain, path_gain, vertex_gains, volumetric_gain, GainedPath};
pub use global::{GlobalGraph, Route};
pub use graph::{
    aerial_edge_free, build_local_graph, connect, dijkstra, ground_edge, polyline_length, project_down,
    shortest_paths, standable, Edge, PlanGraph, ShortestPaths,
};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PlannerError {
    #[error("robot position {0:?} is not in a free voxel")]
    RobotInCollision([f64; 3]),
    #[error("keyframe set is empty")]
    EmptyKeyframeSet,
    #[error("time vectors differ in length: {ground} vs {aerial}")]
    LengthMismatch { ground: usize, aerial: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PlanMode {
    Ground2_5D,
    Aerial3D,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerParams {
    pub mode: PlanMode,
    pub max_vertices: usize,
    pub k_nn: usize,
    /// Sampling box half-size around the robot, meters.
    pub local_half_extent: [f64; 3],
    /// Free voxels required at and above a ground vertex.
    pub ground_clearance: usize,
    pub attempts_per_vertex: usize,
    pub lambda: f64,
}

impl PlannerParams {
    pub fn ground() -> Self {
        Self {
            mode: PlanMode::Ground2_5D,
            max_vertices: 200,
            k_nn: 5,
            local_half_extent: [5.0, 5.0, 2.0],
            ground_clearance: 2,
            attempts_per_vertex: 10,
            lambda: 0.25,
        }
    }

    pub fn aerial() -> Self {
        Self {
            mode: PlanMode::Aerial3D,
            local_half_extent: [5.0, 5.0, 3.0],
            ..Self::ground()
        }
    }
}

/// Releases the aerial robot once ground gain drops to `exp(-gamma)` of the
/// virtual aerial gain.
pub fn deployment_trigger(phi_ground: f64, phi_aerial: f64, gamma: f64) -> bool {
    phi_ground <= (-gamma).exp() * phi_aerial
}

/// Index minimizing `max(t_ground[q], t_aerial[q])`, ties to the smaller index.
/// `Ok(None)` when either robot can reach none of the keyframes.
pub fn select_regroup_point(t_ground: &[f64], t_aerial: &[f64]) -> Result<Option<usize>, PlannerError> {
    if t_ground.len() != t_aerial.len() {
        return Err(PlannerError::LengthMismatch {
            ground: t_ground.len(),
            aerial: t_aerial.len(),
        });
    }
    if t_ground.is_empty() {
        return Err(PlannerError::EmptyKeyframeSet);
    }
    if t_ground.iter().all(|t| t.is_infinite()) || t_aerial.iter().all(|t| t.is_infinite()) {
        return Ok(None);
    }
    let mut best = 0;
    let mut best_cost = f64::INFINITY;
    for (q, (g, a)) in t_ground.iter().zip(t_aerial).enumerate() {
        let c = g.max(*a);
        if c < best_cost {
            best = q;
            best_cost = c;
        }
    }
    Ok(Some(best))
}

pub fn should_return(next_path_time: f64, return_time: f64, elapsed: f64, t_budget: f64) -> bool {
    elapsed + next_path_time + return_time > t_budget
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trigger_boundaries() {
        assert!(deployment_trigger(30.0, 1000.0, 3.5));
        assert!(!deployment_trigger(31.0, 1000.0, 3.5));
        assert!(deployment_trigger(0.0, 0.0, 3.5));
        assert!(!deployment_trigger(1e-12, 0.0, 3.5));
        assert!(!deployment_trigger(5.0, 5.0, 0.1));
    }

    #[test]
    fn regroup_examples() {
        assert_eq!(select_regroup_point(&[10.0, 5.0], &[3.0, 20.0]), Ok(Some(0)));
        assert_eq!(select_regroup_point(&[7.0], &[1.0]), Ok(Some(0)));
        assert_eq!(select_regroup_point(&[], &[]), Err(PlannerError::EmptyKeyframeSet));
        assert_eq!(select_regroup_point(&[1.0, f64::INFINITY], &[f64::INFINITY; 2]), Ok(None));
        assert_eq!(select_regroup_point(&[4.0, 2.0, 4.0], &[4.0, 4.0, 1.0]), Ok(Some(0)));
    }

    #[test]
    fn return_rule_is_strict() {
        assert!(!should_return(0.1, 0.1, 0.0, 1e6));
        assert!(!should_return(20.0, 30.0, 250.0, 300.0));
        assert!(should_return(20.0, 40.0, 250.0, 300.0));
    }
}
