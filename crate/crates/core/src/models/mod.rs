//! The descriptor network and its three training regimes.

mod contrastive;
mod group;
mod mining;
mod pairs;
mod siamese;
pub(crate) mod train;

pub use contrastive::{train_contrastive, ContrastiveConfig};
pub use group::{train_group_classifier, GroupClassifier};
pub use mining::{mine_from_descriptors, mine_hard_pairs, MinedPairs, MiningConfig};
pub use pairs::{sample_pairs, LabeledPair};
pub use siamese::{train_siamese, Branch, SiameseModel};
pub use train::{EpochStats, TrainReport};

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::SegmentGroup;
use crate::nn::{LayerSpec, LayerStack, Mode, Tensor};
use crate::par::{self, Execution};
use crate::preprocess::{GridStage, VoxelizedSegment};

/// A fixed-length embedding of a segment.
#[derive(Clone, Debug, PartialEq)]
pub struct Descriptor(pub Vec<f64>);

impl Descriptor {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn distance_sq(&self, other: &Descriptor) -> f64 {
        squared_distance(&self.0, &other.0)
    }
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Preset {
    #[default]
    Default,
    /// Half the filters and dense width of the default network.
    Small,
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Default => "default",
            Preset::Small => "small",
        })
    }
}

impl FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "default" => Ok(Preset::Default),
            "small" => Ok(Preset::Small),
            other => Err(Error::config("preset", format!("unknown preset `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetConfig {
    pub preset: Preset,
    pub grid_dims: [usize; 3],
    pub descriptor_dim: usize,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            preset: Preset::Default,
            grid_dims: [38, 38, 18],
            descriptor_dim: 64,
            dropout: 0.2,
            seed: 0,
        }
    }
}

/// Layer list for a preset: conv 5^3 -> pool 2 -> relu -> conv 3^3 -> pool 2
/// -> relu -> flatten -> dense -> relu -> dropout -> dense (descriptor).
pub fn architecture(preset: Preset, descriptor_dim: usize, dropout: f64) -> Vec<LayerSpec> {
    let (c1, c2, hidden) = match preset {
        Preset::Default => (16, 32, 256),
        Preset::Small => (8, 16, 128),
    };
    vec![
        LayerSpec::conv3d(c1, 5),
        LayerSpec::maxpool3d(2),
        LayerSpec::Relu,
        LayerSpec::conv3d(c2, 3),
        LayerSpec::maxpool3d(2),
        LayerSpec::Relu,
        LayerSpec::Flatten,
        LayerSpec::dense(hidden),
        LayerSpec::Relu,
        LayerSpec::Dropout { rate: dropout },
        LayerSpec::dense(descriptor_dim),
    ]
}

/// Maps a normalized voxel grid to a [`Descriptor`].
#[derive(Clone, Debug, PartialEq)]
pub struct DescriptorNet {
    pub stack: LayerStack,
    pub preset: Preset,
}

impl DescriptorNet {
    pub fn new(cfg: &NetConfig) -> Result<Self> {
        let [x, y, z] = cfg.grid_dims;
        let stack = LayerStack::new(
            &[1, x, y, z],
            architecture(cfg.preset, cfg.descriptor_dim, cfg.dropout),
            cfg.seed,
        )?;
        Ok(DescriptorNet {
            stack,
            preset: cfg.preset,
        })
    }

    /// Wraps an existing stack whose output is 1-D.
    pub fn from_stack(stack: LayerStack, preset: Preset) -> Result<Self> {
        if stack.input_shape().len() != 4 || stack.output_shape().len() != 1 {
            return Err(Error::InvalidStack(format!(
                "descriptor net must map [1, x, y, z] to a vector, got {:?} -> {:?}",
                stack.input_shape(),
                stack.output_shape()
            )));
        }
        Ok(DescriptorNet { stack, preset })
    }

    pub fn descriptor_dim(&self) -> usize {
        self.stack.output_shape()[0]
    }

    pub fn grid_dims(&self) -> [usize; 3] {
        let s = self.stack.input_shape();
        [s[1], s[2], s[3]]
    }

    pub(crate) fn input_tensor(&self, v: &VoxelizedSegment) -> Result<Tensor> {
        if v.dims != self.grid_dims() {
            return Err(Error::DimensionMismatch {
                context: "descriptor input",
                expected: self.grid_dims().to_vec(),
                found: v.dims.to_vec(),
            });
        }
        if v.stage != GridStage::Normalized {
            return Err(Error::config(
                "stage",
                format!("segment {} must be normalized before extraction", v.segment_id),
            ));
        }
        let [x, y, z] = v.dims;
        Tensor::from_f32(vec![1, x, y, z], &v.values)
    }

    /// Inference-mode descriptor (dropout off).
    pub fn describe(&self, v: &VoxelizedSegment) -> Result<Descriptor> {
        let t = self.input_tensor(v)?;
        Ok(Descriptor(self.stack.infer(&t)?.into_data()))
    }

    pub fn describe_batch(&self, exec: Execution, grids: &[VoxelizedSegment]) -> Result<Vec<Descriptor>> {
        par::map_slice(exec, grids, |v| self.describe(v)).into_iter().collect()
    }

    pub(crate) fn forward_train(&self, v: &VoxelizedSegment, dropout_seed: u64) -> Result<(Tensor, crate::nn::Tape)> {
        let t = self.input_tensor(v)?;
        self.stack.forward(&t, Mode::Train, dropout_seed)
    }
}

/// One training example: a normalized grid with its group label. Augmented
/// copies of a segment share `segment_id` but have distinct sample ids.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub sample_id: u64,
    pub segment_id: u64,
    pub group_id: u64,
    pub grid: VoxelizedSegment,
}

/// Samples indexed by id.
#[derive(Clone, Debug, Default)]
pub struct SampleSet {
    samples: Vec<Sample>,
    index: HashMap<u64, usize>,
}

impl SampleSet {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        let mut index = HashMap::with_capacity(samples.len());
        for (i, s) in samples.iter().enumerate() {
            if index.insert(s.sample_id, i).is_some() {
                return Err(Error::DuplicateSegmentId(s.sample_id));
            }
        }
        Ok(SampleSet { samples, index })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn get(&self, sample_id: u64) -> Option<&Sample> {
        self.index.get(&sample_id).map(|&i| &self.samples[i])
    }

    pub(crate) fn position(&self, sample_id: u64) -> Option<usize> {
        self.index.get(&sample_id).copied()
    }

    /// Groups over sample ids, ordered by group id, members in sample order.
    pub fn groups(&self) -> Vec<SegmentGroup> {
        let mut by_group: std::collections::BTreeMap<u64, Vec<u64>> = Default::default();
        for s in &self.samples {
            by_group.entry(s.group_id).or_default().push(s.sample_id);
        }
        by_group
            .into_iter()
            .map(|(g, m)| SegmentGroup::new(g, m).expect("nonempty by construction"))
            .collect()
    }

    pub fn grids(&self) -> Vec<VoxelizedSegment> {
        self.samples.iter().map(|s| s.grid.clone()).collect()
    }

    pub fn group_ids(&self) -> Vec<u64> {
        self.samples.iter().map(|s| s.group_id).collect()
    }

    pub fn describe_all(&self, net: &DescriptorNet, exec: Execution) -> Result<Vec<Descriptor>> {
        par::map_slice(exec, &self.samples, |s| net.describe(&s.grid))
            .into_iter()
            .collect()
    }
}
