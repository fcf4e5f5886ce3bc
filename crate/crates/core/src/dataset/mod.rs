//! Synthetic scenes, on-disk formats, configuration files and dataset
//! manifests.

mod config;
mod manifest;
mod records;
mod synthetic;
mod voxels;

pub use config::KeyValues;
pub use manifest::{apply_preprocess, assign_splits, check_split_atomic, DatasetManifest, Split, MANIFEST_VERSION};
pub use records::{encode_record, read_dataset, write_dataset, SegmentRecord, DATASET_VERSION};
pub use synthetic::{generate_synthetic, Primitive, SyntheticDataset, SyntheticSpec, PRIMITIVES};
pub use voxels::{read_voxels, write_voxels, VoxelRecord};
