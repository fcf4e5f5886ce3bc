//! Descriptors for 3D point-cloud segments.
//!
//! The crate covers the whole pipeline: segment geometry and preprocessing
//! (clustering, grouping, alignment, augmentation, voxelization,
//! normalization, deduplication), a small deterministic CNN engine, three
//! descriptor training regimes (group classification, Siamese, contrastive),
//! an eigenvalue baseline, and the pair-classification / candidate-match
//! evaluation protocols. Synthetic data generation and the on-disk formats
//! used by the `segdesc` command-line tool live in [`dataset`].

// Index loops mirror the math in the numeric kernels; negated comparisons
// deliberately reject NaN.
#![allow(
    clippy::needless_range_loop,
    clippy::neg_cmp_op_on_partial_ord,
    clippy::too_many_arguments
)]

pub mod dataset;
pub mod eigen;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod models;
pub mod nn;
pub mod par;
pub mod pipeline;
pub mod preprocess;
pub mod rng;

pub use error::{Error, Result};
pub use geometry::{centroid, rotate_about_z, Point, RigidZRotation, Segment, SegmentGroup};
