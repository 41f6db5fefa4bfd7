//! Voxel realization of construction sequences: loop discretization,
//! extrusion, boolean merging, surface sampling and Chamfer distance.

pub mod chamfer;
pub mod extrude;
pub mod sample;
pub mod sketch;
pub mod voxel;

pub use chamfer::{chamfer_distance, KdTree};
pub use extrude::{extrude_pair, merge, rasterize_body, realize, ExtrudeSpec};
pub use sample::{exposed_faces, sample_surface, Point3, PointCloud};
pub use sketch::{arc_center, discretize_curves, discretize_loop, Curve, LoopPolyline, Point2};
pub use voxel::{VoxelGrid, VoxelGridJson};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cad::{validate_structure, CadSequence, CommandType, ValidityReport, ValidityRule};

pub const DEFAULT_RESOLUTION: usize = 64;
pub const DEFAULT_ARC_SEGMENTS: usize = 16;
pub const DEFAULT_N_POINTS: usize = 2000;

/// Geometric invalidity of a sequence.
#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum GeometryError {
    #[error("loop does not close into a polygon")]
    OpenLoop,
    #[error("arc sweep below one quantization step")]
    DegenerateArc,
    #[error("circle shares a loop with other curves")]
    MixedCircleLoop,
    #[error("{0:?} is not a sketch curve")]
    NotACurve(CommandType),
    #[error("solid has no occupied voxels")]
    EmptySolid,
    #[error("body lies entirely outside the model cube")]
    OutOfExtent,
    #[error("trailing loop has no extrusion")]
    TrailingLoop,
    #[error("point cloud is empty")]
    EmptyCloud,
}

impl GeometryError {
    pub fn rule(self) -> ValidityRule {
        match self {
            GeometryError::OpenLoop | GeometryError::NotACurve(_) | GeometryError::EmptyCloud => ValidityRule::OpenLoop,
            GeometryError::DegenerateArc => ValidityRule::DegenerateArc,
            GeometryError::MixedCircleLoop => ValidityRule::MixedCircleLoop,
            GeometryError::EmptySolid => ValidityRule::EmptySolid,
            GeometryError::OutOfExtent => ValidityRule::OutOfExtent,
            GeometryError::TrailingLoop => ValidityRule::TrailingLoop,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeometryConfig {
    pub resolution: usize,
    pub arc_segments: usize,
    pub n_points: usize,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            resolution: DEFAULT_RESOLUTION,
            arc_segments: DEFAULT_ARC_SEGMENTS,
            n_points: DEFAULT_N_POINTS,
        }
    }
}

/// Full validity: structural checks, then realization to a non-empty solid
/// (which always has an exposed surface to sample).
pub fn check_validity(seq: &CadSequence, cfg: &GeometryConfig) -> ValidityReport {
    let report = validate_structure(seq);
    if !report.valid {
        return report;
    }
    match realize(seq, cfg) {
        Ok(_) => ValidityReport::pass(),
        Err(e) => ValidityReport::fail(e.rule()),
    }
}

/// Realizes and samples in one go.
pub fn realize_and_sample(seq: &CadSequence, cfg: &GeometryConfig, seed: u64) -> Result<PointCloud, GeometryError> {
    let grid = realize(seq, cfg)?;
    sample_surface(&grid, cfg.n_points, seed)
}
