use super::voxel::{GridStage, VoxelizedSegment};
use crate::error::{Error, Result};

/// Per-voxel mean and population standard deviation of a training set.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizationStats {
    pub dims: [usize; 3],
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub epsilon: f64,
}

/// Neumaier-compensated accumulator; the result does not depend on the
/// order values arrive in to within a few ulps.
#[derive(Clone, Copy, Default)]
struct Compensated {
    sum: f64,
    comp: f64,
}

impl Compensated {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(self) -> f64 {
        self.sum + self.comp
    }
}

fn check_binary(set: &[VoxelizedSegment], dims: [usize; 3]) -> Result<()> {
    for v in set {
        if v.dims != dims {
            return Err(Error::DimensionMismatch {
                context: "normalizer input",
                expected: dims.to_vec(),
                found: v.dims.to_vec(),
            });
        }
        if v.stage != GridStage::Binary {
            return Err(Error::config(
                "stage",
                format!("segment {} is already normalized", v.segment_id),
            ));
        }
    }
    Ok(())
}

/// Two-pass per-cell mean and population std over `train`.
pub fn fit_normalizer(train: &[VoxelizedSegment], epsilon: f64) -> Result<NormalizationStats> {
    let first = train
        .first()
        .ok_or(Error::NoEligibleEntries("normalizer needs a nonempty training set"))?;
    let dims = first.dims;
    check_binary(train, dims)?;
    let cells = first.cell_count();
    let n = train.len() as f64;

    let mut sums = vec![Compensated::default(); cells];
    for v in train {
        for (acc, &x) in sums.iter_mut().zip(&v.values) {
            acc.add(x as f64);
        }
    }
    let mean: Vec<f64> = sums.iter().map(|s| s.value() / n).collect();

    let mut sq = vec![Compensated::default(); cells];
    for v in train {
        for ((acc, &x), &m) in sq.iter_mut().zip(&v.values).zip(&mean) {
            let d = x as f64 - m;
            acc.add(d * d);
        }
    }
    let std = sq.iter().map(|s| (s.value() / n).max(0.0).sqrt()).collect();
    Ok(NormalizationStats {
        dims,
        mean,
        std,
        epsilon,
    })
}

impl NormalizationStats {
    /// `(v - mean) / (std + epsilon)` per cell.
    pub fn apply(&self, v: &VoxelizedSegment) -> Result<VoxelizedSegment> {
        if v.dims != self.dims {
            return Err(Error::DimensionMismatch {
                context: "normalizer apply",
                expected: self.dims.to_vec(),
                found: v.dims.to_vec(),
            });
        }
        if v.stage != GridStage::Binary {
            return Err(Error::config(
                "stage",
                format!("segment {} is already normalized", v.segment_id),
            ));
        }
        let values = v
            .values
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(&x, (&m, &s))| ((x as f64 - m) / (s + self.epsilon)) as f32)
            .collect();
        Ok(VoxelizedSegment {
            segment_id: v.segment_id,
            dims: v.dims,
            values,
            stage: GridStage::Normalized,
            occupied_count: v.occupied_count,
        })
    }

    /// Little-endian byte image: dims, epsilon, means, stds.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + 16 * self.mean.len());
        for d in self.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        out.extend_from_slice(&self.epsilon.to_le_bytes());
        for v in self.mean.iter().chain(&self.std) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(format!("normalization stats: {m}"));
        if bytes.len() < 32 {
            return Err(bad("header too short"));
        }
        let word = |i: usize| u64::from_le_bytes(bytes[i * 8..i * 8 + 8].try_into().unwrap());
        let dims = [word(0) as usize, word(1) as usize, word(2) as usize];
        let epsilon = f64::from_bits(word(3));
        let cells: usize = dims.iter().product();
        if bytes.len() != 32 + 16 * cells {
            return Err(bad("length does not match dims"));
        }
        let mean = (0..cells).map(|i| f64::from_bits(word(4 + i))).collect();
        let std = (0..cells).map(|i| f64::from_bits(word(4 + cells + i))).collect();
        Ok(NormalizationStats {
            dims,
            mean,
            std,
            epsilon,
        })
    }
}

/// Fits statistics on `train` and applies the same statistics to both sets.
pub fn fit_and_apply_normalizer(
    train: &[VoxelizedSegment],
    rest: &[VoxelizedSegment],
    epsilon: f64,
) -> Result<(NormalizationStats, Vec<VoxelizedSegment>, Vec<VoxelizedSegment>)> {
    let stats = fit_normalizer(train, epsilon)?;
    check_binary(rest, stats.dims)?;
    let train_n = train.iter().map(|v| stats.apply(v)).collect::<Result<_>>()?;
    let rest_n = rest.iter().map(|v| stats.apply(v)).collect::<Result<_>>()?;
    Ok((stats, train_n, rest_n))
}
