use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;

use super::config::KeyValues;
use crate::error::{Error, Result};
use crate::preprocess::{PreprocessConfig, VoxelGridSpec};
use crate::rng;

pub const MANIFEST_VERSION: &str = "segman1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::config("split", format!("unknown split `{s}`")))
    }
}

/// Assigns whole groups to splits: a seeded shuffle of the group ids, cut
/// by the train and validation fractions; the rest is test.
pub fn assign_splits(group_ids: &[u64], train: f64, val: f64, seed: u64) -> Result<BTreeMap<u64, Split>> {
    if !(train > 0.0 && val >= 0.0 && train + val <= 1.0) {
        return Err(Error::config(
            "split fractions",
            "need train > 0, val >= 0, train + val <= 1",
        ));
    }
    let mut ids = group_ids.to_vec();
    ids.sort_unstable();
    ids.dedup();
    ids.shuffle(&mut rng::stream(seed, &[0x5350_4c54]));
    let n = ids.len() as f64;
    let n_train = (train * n).round() as usize;
    let n_val = ((val * n).round() as usize).min(ids.len() - n_train.min(ids.len()));
    Ok(ids
        .into_iter()
        .enumerate()
        .map(|(i, g)| {
            let s = if i < n_train {
                Split::Train
            } else if i < n_train + n_val {
                Split::Validation
            } else {
                Split::Test
            };
            (g, s)
        })
        .collect())
}

/// Fails if any group occurs in more than one split. `members` lists
/// (group_id, split) for every sample.
pub fn check_split_atomic(members: impl IntoIterator<Item = (u64, Split)>) -> Result<()> {
    let mut seen: BTreeMap<u64, Split> = BTreeMap::new();
    for (g, s) in members {
        if let Some(prev) = seen.insert(g, s) {
            if prev != s {
                return Err(Error::config("split", format!("group {g} spans {prev} and {s}")));
            }
        }
    }
    Ok(())
}

/// Overrides preprocessing fields from `preprocess.*` keys.
pub fn apply_preprocess(cfg: &mut PreprocessConfig, kv: &KeyValues) -> Result<()> {
    kv.set("preprocess.d_same", &mut cfg.d_same)?;
    kv.set("preprocess.th_h", &mut cfg.th_h)?;
    kv.set("preprocess.cluster_radius", &mut cfg.cluster_radius)?;
    kv.set("preprocess.min_cluster_points", &mut cfg.min_cluster_points)?;
    if let Some(deg) = kv.list::<f64>("preprocess.augmentation_deg")? {
        cfg.augmentation_angles = deg.iter().map(|d| d.to_radians()).collect();
    }
    if let Some(d) = kv.list::<usize>("preprocess.grid")? {
        cfg.grid.dims = d
            .try_into()
            .map_err(|_| Error::config("preprocess.grid", "need three sizes nx,ny,nz"))?;
    }
    kv.set("preprocess.voxel_size", &mut cfg.grid.voxel_size)?;
    kv.set("preprocess.normalization_epsilon", &mut cfg.normalization_epsilon)?;
    cfg.validate()
}

fn join<T: fmt::Display>(v: impl IntoIterator<Item = T>) -> String {
    v.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// Everything needed to reload a preprocessed dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    /// Path of the source segment file.
    pub dataset: String,
    pub preprocess: PreprocessConfig,
    /// Normalization statistics file, relative to the manifest.
    pub stats_file: String,
    /// Voxel file per split, relative to the manifest.
    pub voxel_files: BTreeMap<Split, String>,
    pub splits: BTreeMap<u64, Split>,
    /// Free-form counts and diagnostics.
    pub summary: BTreeMap<String, String>,
}

impl DatasetManifest {
    pub fn to_text(&self) -> String {
        let p = &self.preprocess;
        let mut lines = vec![
            format!("format_version={MANIFEST_VERSION}"),
            format!("dataset={}", self.dataset),
            format!("stats={}", self.stats_file),
            format!("preprocess.d_same={}", p.d_same),
            format!("preprocess.th_h={}", p.th_h),
            format!("preprocess.cluster_radius={}", p.cluster_radius),
            format!("preprocess.min_cluster_points={}", p.min_cluster_points),
            format!(
                "preprocess.augmentation_deg={}",
                join(p.augmentation_angles.iter().map(|a| a.to_degrees()))
            ),
            format!("preprocess.grid={}", join(p.grid.dims)),
            format!("preprocess.voxel_size={}", p.grid.voxel_size),
            format!("preprocess.normalization_epsilon={}", p.normalization_epsilon),
        ];
        for (s, f) in &self.voxel_files {
            lines.push(format!("voxels.{s}={f}"));
        }
        for (k, v) in &self.summary {
            lines.push(format!("summary.{k}={v}"));
        }
        for (g, s) in &self.splits {
            lines.push(format!("group.{g}={s}"));
        }
        lines.join("\n") + "\n"
    }

    pub fn parse(text: &str, path: &str) -> Result<Self> {
        let kv = KeyValues::parse(text, path)?;
        let version = kv.raw("format_version").unwrap_or_default().to_string();
        if version != MANIFEST_VERSION {
            return Err(Error::VersionMismatch {
                path: path.into(),
                expected: MANIFEST_VERSION.into(),
                found: version,
            });
        }
        let need = |k: &str| {
            kv.raw(k).map(str::to_string).ok_or_else(|| Error::Format {
                path: path.into(),
                line: 0,
                message: format!("missing key `{k}`"),
            })
        };
        let dataset = need("dataset")?;
        let stats_file = need("stats")?;
        // Augmentation angles are stored in degrees and may be absent.
        let mut preprocess = PreprocessConfig {
            augmentation_angles: Vec::new(),
            grid: VoxelGridSpec::default(),
            ..PreprocessConfig::default()
        };
        apply_preprocess(&mut preprocess, &kv)?;
        let mut voxel_files = BTreeMap::new();
        for s in Split::ALL {
            if let Some(f) = kv.raw(&format!("voxels.{s}")) {
                voxel_files.insert(s, f.to_string());
            }
        }
        let summary = kv
            .with_prefix("summary.")
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        let mut splits = BTreeMap::new();
        for (g, s) in kv.with_prefix("group.") {
            let g: u64 = g
                .parse()
                .map_err(|_| Error::config("group", format!("bad group id `{g}`")))?;
            splits.insert(g, s.parse()?);
        }
        kv.finish()?;
        Ok(DatasetManifest {
            dataset,
            preprocess,
            stats_file,
            voxel_files,
            splits,
            summary,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, &path.display().to_string())
    }
}
