//! Segment preprocessing: Euclidean clustering, grouping across frames,
//! observer alignment, rotation augmentation, voxelization, per-voxel
//! normalization and Hamming deduplication.

mod align;
mod cluster;
mod dedup;
mod grouping;
mod normalize;
mod voxel;

pub use align::{align_segment, augment_rotations};
pub use cluster::euclidean_cluster;
pub use dedup::{hamming_dedup, hamming_distance};
pub use grouping::build_groups;
pub use normalize::{fit_and_apply_normalizer, fit_normalizer, NormalizationStats};
pub use voxel::{voxelize, GridStage, VoxelGridSpec, VoxelizedSegment};

use crate::error::{Error, Result};

/// Default augmentation angles, in degrees.
pub const DEFAULT_AUGMENTATION_DEG: [f64; 5] = [-15.0, -7.5, 0.0, 7.5, 15.0];

#[derive(Clone, Debug, PartialEq)]
pub struct PreprocessConfig {
    /// Maximum centroid distance for two segments to be the same object (m).
    pub d_same: f64,
    /// Hamming threshold below which two segments of a group are duplicates.
    pub th_h: usize,
    pub cluster_radius: f64,
    pub min_cluster_points: usize,
    /// Rotation angles applied to training segments, radians.
    pub augmentation_angles: Vec<f64>,
    pub grid: VoxelGridSpec,
    pub normalization_epsilon: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            d_same: 1.5,
            th_h: 50,
            cluster_radius: 0.2,
            min_cluster_points: 100,
            augmentation_angles: DEFAULT_AUGMENTATION_DEG.iter().map(|d| d.to_radians()).collect(),
            grid: VoxelGridSpec::default(),
            normalization_epsilon: 1e-8,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.d_same > 0.0 && self.d_same.is_finite()) {
            return Err(Error::config("d_same", "must be positive"));
        }
        if !(self.cluster_radius > 0.0 && self.cluster_radius.is_finite()) {
            return Err(Error::config("cluster_radius", "must be positive"));
        }
        if !(self.normalization_epsilon > 0.0) {
            return Err(Error::config("normalization_epsilon", "must be positive"));
        }
        if self.augmentation_angles.iter().any(|a| !a.is_finite()) {
            return Err(Error::config("augmentation_angles", "must be finite"));
        }
        self.grid.validate()
    }
}
