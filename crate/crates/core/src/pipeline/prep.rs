use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use super::config::PipelineConfig;
use crate::dataset::{
    assign_splits, check_split_atomic, generate_synthetic, read_voxels, write_dataset, write_voxels, DatasetManifest,
    SegmentRecord, Split, SyntheticDataset, SyntheticSpec, VoxelRecord,
};
use crate::error::{Error, Result};
use crate::geometry::Segment;
use crate::models::{Sample, SampleSet};
use crate::par::{self, Execution};
use crate::preprocess::{
    align_segment, augment_rotations, build_groups, fit_normalizer, hamming_dedup, voxelize, NormalizationStats,
};

pub const SEGMENTS_FILE: &str = "segments.seg";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const STATS_FILE: &str = "stats.bin";

/// Generates a synthetic dataset and writes `segments.seg` plus a
/// `generate.txt` summary into `out_dir`.
pub fn generate(spec: &SyntheticSpec, out_dir: &Path, exec: Execution) -> Result<SyntheticDataset> {
    let data = generate_synthetic(spec, exec)?;
    std::fs::create_dir_all(out_dir)?;
    write_dataset(&out_dir.join(SEGMENTS_FILE), &data.records)?;
    let groups: BTreeSet<u64> = data.records.iter().map(|r| r.group_id).collect();
    let mut summary = format!(
        "groups={}\nsegments={}\ndropped_views={}\nseed={}\n",
        groups.len(),
        data.records.len(),
        data.dropped_views,
        spec.seed
    );
    for p in crate::dataset::PRIMITIVES {
        let n = data.primitives.iter().filter(|&&q| q == p).count();
        summary.push_str(&format!("primitive.{p:?}={n}\n").to_lowercase());
    }
    std::fs::write(out_dir.join("generate.txt"), summary)?;
    Ok(data)
}

/// Voxelized samples per split with the statistics fitted on training.
#[derive(Clone, Debug)]
pub struct Preprocessed {
    pub splits: BTreeMap<Split, Vec<VoxelRecord>>,
    pub stats: NormalizationStats,
    /// Split of every group label.
    pub group_splits: BTreeMap<u64, Split>,
    pub summary: BTreeMap<String, String>,
}

/// Labels every segment with a group built from centroid chaining, run by
/// run. Returns segment id -> label and the label purity against the
/// generator's group ids.
fn label_segments(records: &[SegmentRecord], cfg: &PipelineConfig) -> (BTreeMap<u64, u64>, BTreeMap<String, String>) {
    let mut runs: BTreeMap<&str, Vec<Segment>> = BTreeMap::new();
    for r in records {
        runs.entry(r.segment.run_id.as_str())
            .or_default()
            .push(r.segment.clone());
    }
    let truth: BTreeMap<u64, u64> = records.iter().map(|r| (r.segment.segment_id, r.group_id)).collect();
    let mut label = BTreeMap::new();
    let mut next = 0u64;
    let (mut built, mut pure) = (0usize, 0usize);
    for segs in runs.values() {
        for g in build_groups(segs, &cfg.preprocess) {
            let ids: BTreeSet<u64> = g.member_ids().iter().map(|m| truth[m]).collect();
            built += 1;
            pure += usize::from(ids.len() == 1);
            for &m in g.member_ids() {
                label.insert(m, next);
            }
            next += 1;
        }
    }
    let true_groups: BTreeSet<u64> = truth.values().copied().collect();
    let summary = [
        ("built_groups".to_string(), built.to_string()),
        ("source_groups".to_string(), true_groups.len().to_string()),
        (
            "group_purity".to_string(),
            format!("{:.4}", pure as f64 / built.max(1) as f64),
        ),
    ]
    .into();
    (label, summary)
}

/// Groups, splits, aligns, augments (training split only), voxelizes and
/// deduplicates, then fits normalization statistics on the training split.
///
/// Sample ids are `segment_id * A + k` for augmentation angle `k` of `A`;
/// validation and test samples use the aligned segment itself (`k = 0`).
/// Segments whose alignment is undefined or whose grid is empty are dropped
/// and counted.
pub fn preprocess_records(records: &[SegmentRecord], cfg: &PipelineConfig, exec: Execution) -> Result<Preprocessed> {
    cfg.preprocess.validate()?;
    let (label, mut summary) = label_segments(records, cfg);
    let labels: Vec<u64> = label.values().copied().collect();
    let group_splits = assign_splits(&labels, cfg.split.train, cfg.split.val, cfg.split.seed)?;
    let angles = &cfg.preprocess.augmentation_angles;
    let n_angles = angles.len().max(1) as u64;

    let per_segment = par::map_slice(exec, records, |r| -> Result<(Vec<VoxelRecord>, usize)> {
        let seg = &r.segment;
        let g = label[&seg.segment_id];
        let aligned = match align_segment(seg) {
            Ok(a) => a,
            Err(Error::AlignmentUndefined { .. }) => return Ok((Vec::new(), 1)),
            Err(e) => return Err(e),
        };
        let copies = if group_splits[&g] == Split::Train && !angles.is_empty() {
            augment_rotations(&aligned, angles)
        } else {
            vec![aligned]
        };
        let mut out = Vec::with_capacity(copies.len());
        let mut dropped = 0;
        for (k, c) in copies.iter().enumerate() {
            let sample_id = seg.segment_id * n_angles + k as u64;
            match voxelize(c, &cfg.preprocess.grid) {
                Ok(mut grid) => {
                    grid.segment_id = sample_id;
                    out.push(VoxelRecord {
                        sample_id,
                        segment_id: seg.segment_id,
                        group_id: g,
                        grid,
                    });
                }
                Err(Error::EmptyVoxelization { .. }) => dropped += 1,
                Err(e) => return Err(e),
            }
        }
        Ok((out, dropped))
    });

    let mut by_group: BTreeMap<u64, Vec<VoxelRecord>> = BTreeMap::new();
    let mut dropped = 0;
    for res in per_segment {
        let (recs, d) = res?;
        dropped += d;
        for r in recs {
            by_group.entry(r.group_id).or_default().push(r);
        }
    }
    let groups: Vec<(u64, Vec<VoxelRecord>)> = by_group.into_iter().collect();
    let kept = par::map_slice(exec, &groups, |(_, members)| {
        let grids: Vec<_> = members.iter().map(|m| m.grid.clone()).collect();
        let keep: BTreeSet<u64> = hamming_dedup(&grids, cfg.preprocess.th_h)
            .iter()
            .map(|v| v.segment_id)
            .collect();
        members
            .iter()
            .filter(|m| keep.contains(&m.sample_id))
            .cloned()
            .collect::<Vec<_>>()
    });

    let mut splits: BTreeMap<Split, Vec<VoxelRecord>> = Split::ALL.into_iter().map(|s| (s, Vec::new())).collect();
    let mut before = 0;
    for ((g, members), kept) in groups.iter().zip(kept) {
        before += members.len();
        splits
            .get_mut(&group_splits[g])
            .expect("all splits present")
            .extend(kept);
    }
    for recs in splits.values_mut() {
        recs.sort_by_key(|r| r.sample_id);
    }
    check_split_atomic(
        splits
            .iter()
            .flat_map(|(s, rs)| rs.iter().map(move |r| (r.group_id, *s))),
    )?;
    let train_grids: Vec<_> = splits[&Split::Train].iter().map(|r| r.grid.clone()).collect();
    if train_grids.is_empty() {
        return Err(Error::NoEligibleEntries("training split is empty after preprocessing"));
    }
    let stats = fit_normalizer(&train_grids, cfg.preprocess.normalization_epsilon)?;

    let total: usize = splits.values().map(Vec::len).sum();
    summary.insert("segments".into(), records.len().to_string());
    summary.insert("dropped".into(), dropped.to_string());
    summary.insert("duplicates_removed".into(), (before - total).to_string());
    for (s, rs) in &splits {
        summary.insert(format!("samples.{s}"), rs.len().to_string());
    }
    Ok(Preprocessed {
        splits,
        stats,
        group_splits,
        summary,
    })
}

/// Writes `{train,val,test}.vox`, `stats.bin` and `manifest.txt`.
pub fn write_preprocessed(
    out_dir: &Path,
    dataset: &Path,
    cfg: &PipelineConfig,
    p: &Preprocessed,
) -> Result<DatasetManifest> {
    std::fs::create_dir_all(out_dir)?;
    let mut voxel_files = BTreeMap::new();
    for (s, recs) in &p.splits {
        let name = format!("{s}.vox");
        write_voxels(&out_dir.join(&name), cfg.preprocess.grid.dims, recs)?;
        voxel_files.insert(*s, name);
    }
    std::fs::write(out_dir.join(STATS_FILE), p.stats.to_bytes())?;
    let dataset = std::fs::canonicalize(dataset).unwrap_or_else(|_| dataset.to_path_buf());
    let manifest = DatasetManifest {
        dataset: dataset.display().to_string(),
        preprocess: cfg.preprocess.clone(),
        stats_file: STATS_FILE.into(),
        voxel_files,
        splits: p.group_splits.clone(),
        summary: p.summary.clone(),
    };
    manifest.write(&out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// A preprocessed directory opened for reading.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub dir: std::path::PathBuf,
    pub manifest: DatasetManifest,
    pub stats: NormalizationStats,
}

impl PreparedData {
    pub fn open(dir: &Path) -> Result<Self> {
        let manifest = DatasetManifest::read(&dir.join(MANIFEST_FILE))?;
        let stats = NormalizationStats::from_bytes(&std::fs::read(dir.join(&manifest.stats_file))?)?;
        Ok(PreparedData {
            dir: dir.to_path_buf(),
            manifest,
            stats,
        })
    }

    pub fn grid_dims(&self) -> [usize; 3] {
        self.manifest.preprocess.grid.dims
    }

    /// Normalized samples of one split.
    pub fn load(&self, split: Split, exec: Execution) -> Result<SampleSet> {
        let file = self
            .manifest
            .voxel_files
            .get(&split)
            .ok_or_else(|| Error::config("manifest", format!("no voxel file for split `{split}`")))?;
        let (dims, recs) = read_voxels(&self.dir.join(file))?;
        normalized_samples(&recs, dims, &self.stats, exec)
    }
}

/// Applies `stats` to binary voxel records.
pub fn normalized_samples(
    recs: &[VoxelRecord],
    dims: [usize; 3],
    stats: &NormalizationStats,
    exec: Execution,
) -> Result<SampleSet> {
    if dims != stats.dims {
        return Err(Error::DimensionMismatch {
            context: "voxel file vs normalization statistics",
            expected: stats.dims.to_vec(),
            found: dims.to_vec(),
        });
    }
    let samples = par::map_slice(exec, recs, |r| {
        Ok(Sample {
            sample_id: r.sample_id,
            segment_id: r.segment_id,
            group_id: r.group_id,
            grid: stats.apply(&r.grid)?,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    SampleSet::new(samples)
}
