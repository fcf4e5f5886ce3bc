use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng as _;

use super::config::PipelineConfig;
use super::prep::PreparedData;
use super::Method;
use crate::dataset::{read_dataset, Split};
use crate::eigen::eigen_descriptor;
use crate::error::{Error, Result};
use crate::eval::{
    candidate_match_accuracy, pair_examples, roc_auc, score_pairs, throughput_bench, train_pair_classifier,
    DescriptorIndex, EvalReport, PairScorer, Throughput,
};
use crate::geometry::{Segment, SegmentGroup};
use crate::models::{
    sample_pairs, train_contrastive, train_group_classifier, train_siamese, Descriptor, DescriptorNet, NetConfig,
    Preset, SampleSet, SiameseModel, TrainReport,
};
use crate::nn::{Checkpoint, LayerStack};
use crate::par::{self, Execution};
use crate::preprocess::VoxelizedSegment;
use crate::rng;

fn positives_available(groups: &[SegmentGroup]) -> usize {
    groups.iter().map(|g| g.len() * g.len().saturating_sub(1) / 2).sum()
}

/// `n` positive pairs (and as many negatives), capped at what `set` offers.
fn pairs_from(set: &SampleSet, n: usize, seed: u64) -> Result<Vec<crate::models::LabeledPair>> {
    let groups = set.groups();
    sample_pairs(&groups, n.min(positives_available(&groups)), seed)
}

/// Trains one learned method on a preprocessed dataset.
pub fn train_method(
    method: Method,
    cfg: &PipelineConfig,
    data: &PreparedData,
    exec: Execution,
) -> Result<(Checkpoint, TrainReport)> {
    let train = data.load(Split::Train, exec)?;
    let val = data.load(Split::Validation, exec)?;
    let (mut ckpt, report) = train_on_sets(method, cfg, data.grid_dims(), &train, &val, exec)?;
    let dir = std::fs::canonicalize(&data.dir).unwrap_or_else(|_| data.dir.clone());
    ckpt.meta.push(("data".into(), dir.display().to_string()));
    Ok((ckpt, report))
}

/// Trains on in-memory sample sets. An empty validation set disables
/// validation metrics.
pub fn train_on_sets(
    method: Method,
    cfg: &PipelineConfig,
    grid_dims: [usize; 3],
    train: &SampleSet,
    val: &SampleSet,
    exec: Execution,
) -> Result<(Checkpoint, TrainReport)> {
    let net = DescriptorNet::new(&NetConfig {
        preset: cfg.preset,
        grid_dims,
        descriptor_dim: cfg.descriptor_dim,
        dropout: cfg.dropout_for(method),
        seed: cfg.sgd.seed,
    })?;
    let val_opt = (!val.is_empty()).then_some(val);
    let mut meta = vec![("preset".to_string(), cfg.preset.to_string())];
    let (stacks, report) = match method {
        Method::Group => {
            let (m, r) = train_group_classifier(net, train, val_opt, cfg.min_group_size, &cfg.sgd, exec)?;
            let classes = m.class_groups.iter().map(u64::to_string).collect::<Vec<_>>().join(",");
            meta.push(("class_groups".into(), classes));
            (vec![("net".to_string(), m.net.stack), ("head".to_string(), m.head)], r)
        }
        Method::Siamese => {
            let pairs = pairs_from(train, cfg.siamese_pairs, cfg.sgd.seed)?;
            let val_pairs = match val_opt {
                Some(v) => pairs_from(v, cfg.siamese_val_pairs, rng::derive(cfg.sgd.seed, &[1]))?,
                None => Vec::new(),
            };
            let val_arg = val_opt.map(|v| (v, val_pairs.as_slice()));
            let (m, r) = train_siamese(net, train, &pairs, val_arg, &cfg.sgd, exec, |_| {})?;
            let head = m.head.clone();
            (
                vec![("net".to_string(), m.into_net().stack), ("head".to_string(), head)],
                r,
            )
        }
        Method::Contrastive => {
            let (n, r) = train_contrastive(net, train, val_opt, &cfg.contrastive, &cfg.sgd, exec)?;
            (vec![("net".to_string(), n.stack)], r)
        }
        Method::Eigen => {
            return Err(Error::config(
                "method",
                "the eigenvalue baseline has no trainable parameters",
            ));
        }
    };
    let ckpt = Checkpoint {
        regime: method.to_string(),
        meta,
        stacks,
    };
    Ok((ckpt, report))
}

/// A trained descriptor network as read back from a checkpoint.
#[derive(Clone, Debug)]
pub struct LoadedModel {
    pub method: Method,
    pub net: DescriptorNet,
    /// The merge head, for Siamese checkpoints.
    pub siamese: Option<SiameseModel>,
    /// Preprocessed directory the model was trained on.
    pub data_dir: Option<PathBuf>,
}

impl LoadedModel {
    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        let method: Method = c
            .regime
            .parse()
            .map_err(|_| bad(&format!("unknown regime `{}`", c.regime)))?;
        let preset: Preset = c.meta("preset").unwrap_or("default").parse()?;
        let stack = c.stack("net").ok_or_else(|| bad("missing `net` stack"))?.clone();
        let net = DescriptorNet::from_stack(stack, preset)?;
        let siamese = match method {
            Method::Siamese => {
                let head: LayerStack = c.stack("head").ok_or_else(|| bad("missing `head` stack"))?.clone();
                Some(SiameseModel::from_parts(net.clone(), head)?)
            }
            _ => None,
        };
        Ok(LoadedModel {
            method,
            net,
            siamese,
            data_dir: c.meta("data").map(PathBuf::from),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// Descriptor rows `sample_id,segment_id,group_id,split,d0,..` for each
/// set in the given order, samples in stored order.
pub fn descriptors_csv(net: &DescriptorNet, sets: &[(Split, &SampleSet)], exec: Execution) -> Result<String> {
    let mut out = String::from("sample_id,segment_id,group_id,split");
    for k in 0..net.descriptor_dim() {
        write!(out, ",d{k}").expect("string write");
    }
    out.push('\n');
    for (split, set) in sets {
        let descs = set.describe_all(net, exec)?;
        for (s, d) in set.samples().iter().zip(&descs) {
            write!(out, "{},{},{},{split}", s.sample_id, s.segment_id, s.group_id).expect("string write");
            for v in &d.0 {
                write!(out, ",{v}").expect("string write");
            }
            out.push('\n');
        }
    }
    Ok(out)
}

/// Descriptor index of a sample set keyed by sample id.
pub fn index_of(set: &SampleSet, descs: &[Descriptor]) -> Result<DescriptorIndex> {
    let ids: Vec<u64> = set.samples().iter().map(|s| s.sample_id).collect();
    DescriptorIndex::from_parts(&ids, &set.group_ids(), descs)
}

/// Eigenvalue descriptors of the source segment of every sample, keyed by
/// sample id. Degenerate segments are left out.
pub fn eigen_index(set: &SampleSet, segments: &HashMap<u64, Segment>, exec: Execution) -> Result<DescriptorIndex> {
    let rows = par::map_slice(exec, set.samples(), |s| {
        let seg = segments
            .get(&s.segment_id)
            .ok_or(Error::NoEligibleEntries("sample without a source segment"))?;
        match eigen_descriptor(seg) {
            Ok(d) => Ok(Some((s.sample_id, s.group_id, d.to_descriptor()))),
            Err(Error::DegenerateSegment(_)) => Ok(None),
            Err(e) => Err(e),
        }
    });
    let (mut ids, mut groups, mut descs) = (Vec::new(), Vec::new(), Vec::new());
    for r in rows {
        if let Some((i, g, d)) = r? {
            ids.push(i);
            groups.push(g);
            descs.push(d);
        }
    }
    DescriptorIndex::from_parts(&ids, &groups, &descs)
}

/// Candidate matching over the test index and ROC over seeded test pairs.
///
/// Pairs are drawn from `test` and pairs whose members are missing from the
/// index are skipped. Pair scores come from the Siamese head when given,
/// else from a pair classifier fitted on pairs of the validation index.
pub fn evaluate_indices(
    method: &str,
    val: &SampleSet,
    val_index: &DescriptorIndex,
    test: &SampleSet,
    test_index: &DescriptorIndex,
    siamese: Option<&SiameseModel>,
    cfg: &PipelineConfig,
    exec: Execution,
) -> Result<EvalReport> {
    let candidate = candidate_match_accuracy(test_index, exec)?;
    let indexed =
        |idx: &DescriptorIndex, p: &crate::models::LabeledPair| idx.get(p.id_a).is_some() && idx.get(p.id_b).is_some();
    let test_pairs: Vec<_> = pairs_from(test, cfg.eval.pairs, cfg.eval.seed)?
        .into_iter()
        .filter(|p| indexed(test_index, p))
        .collect();
    let scored = match siamese {
        Some(m) => score_pairs(PairScorer::Siamese(m), &test_pairs, test_index, exec)?,
        None => {
            let fit_pairs: Vec<_> = pairs_from(val, cfg.eval.classifier_pairs, rng::derive(cfg.eval.seed, &[1]))?
                .into_iter()
                .filter(|p| indexed(val_index, p))
                .collect();
            let examples = pair_examples(&fit_pairs, val_index)?;
            let clf = train_pair_classifier(&examples, &cfg.eval.classifier, exec)?;
            score_pairs(PairScorer::Classifier(&clf), &test_pairs, test_index, exec)?
        }
    };
    Ok(EvalReport {
        method: method.to_string(),
        roc: roc_auc(&scored)?,
        candidate,
        throughput: None,
    })
}

/// Evaluates a trained model on the test split of `data`, with extraction
/// throughput measured on a test batch.
pub fn evaluate_model(
    model: &LoadedModel,
    data: &PreparedData,
    cfg: &PipelineConfig,
    exec: Execution,
) -> Result<EvalReport> {
    let val = data.load(Split::Validation, exec)?;
    let test = data.load(Split::Test, exec)?;
    let val_index = index_of(&val, &val.describe_all(&model.net, exec)?)?;
    let test_index = index_of(&test, &test.describe_all(&model.net, exec)?)?;
    let mut report = evaluate_indices(
        &model.method.to_string(),
        &val,
        &val_index,
        &test,
        &test_index,
        model.siamese.as_ref(),
        cfg,
        exec,
    )?;
    let batch: Vec<VoxelizedSegment> = test
        .samples()
        .iter()
        .take(cfg.bench.batch)
        .map(|s| s.grid.clone())
        .collect();
    report.throughput = Some(throughput_bench(&model.net, &batch, cfg.bench.repetitions, exec)?.segments_per_second);
    Ok(report)
}

/// Evaluates the eigenvalue baseline on the same samples as
/// [`evaluate_model`], reading the source segments named in the manifest.
pub fn evaluate_eigen(data: &PreparedData, cfg: &PipelineConfig, exec: Execution) -> Result<EvalReport> {
    let segments: HashMap<u64, Segment> = read_dataset(Path::new(&data.manifest.dataset))?
        .into_iter()
        .map(|r| (r.segment.segment_id, r.segment))
        .collect();
    let val = data.load(Split::Validation, exec)?;
    let test = data.load(Split::Test, exec)?;
    let val_index = eigen_index(&val, &segments, exec)?;
    let test_index = eigen_index(&test, &segments, exec)?;
    evaluate_indices("eigen", &val, &val_index, &test, &test_index, None, cfg, exec)
}

/// Random normalized-looking grids for timing.
pub fn bench_batch(dims: [usize; 3], n: usize, seed: u64) -> Result<Vec<VoxelizedSegment>> {
    let cells: usize = dims.iter().product();
    (0..n)
        .map(|i| {
            let mut r = rng::stream(seed, &[i as u64]);
            let values = (0..cells).map(|_| r.random_range(-1.0f32..1.0)).collect();
            VoxelizedSegment::normalized(i as u64, dims, values)
        })
        .collect()
}

/// Extraction throughput of freshly initialized networks of each preset on
/// the same batch.
pub fn bench_presets(
    presets: &[Preset],
    descriptor_dim: usize,
    batch: &[VoxelizedSegment],
    repetitions: usize,
    exec: Execution,
) -> Result<Vec<(Preset, Throughput)>> {
    let dims = batch.first().ok_or(Error::NoEligibleEntries("throughput batch"))?.dims;
    presets
        .iter()
        .map(|&preset| {
            let net = DescriptorNet::new(&NetConfig {
                preset,
                grid_dims: dims,
                descriptor_dim,
                dropout: 0.0,
                seed: 0,
            })?;
            Ok((preset, throughput_bench(&net, batch, repetitions, exec)?))
        })
        .collect()
}

#[cfg(test)]
#[allow(clippy::field_reassign_with_default)]
mod tests {
    use super::*;
    use crate::models::Sample;

    const DIMS: [usize; 3] = [14, 14, 14];

    fn samples(groups: u64, members: u64, seed: u64) -> SampleSet {
        let grids = bench_batch(DIMS, (groups * members) as usize, seed).unwrap();
        let samples = grids
            .into_iter()
            .enumerate()
            .map(|(i, grid)| Sample {
                sample_id: i as u64,
                segment_id: i as u64,
                group_id: i as u64 / members,
                grid,
            })
            .collect();
        SampleSet::new(samples).unwrap()
    }

    #[test]
    fn checkpoints_round_trip_into_models() {
        let mut cfg = PipelineConfig::default();
        cfg.preset = Preset::Small;
        cfg.descriptor_dim = 8;
        cfg.sgd.epochs = 1;
        cfg.siamese_pairs = 10;
        cfg.siamese_val_pairs = 4;
        cfg.min_group_size = 2;
        let train = samples(4, 4, 1);
        let val = samples(2, 3, 2);
        let dims = DIMS;
        for method in [Method::Group, Method::Siamese, Method::Contrastive] {
            let (ckpt, report) = train_on_sets(method, &cfg, dims, &train, &val, Execution::Parallel).unwrap();
            assert_eq!(report.epochs.len(), 1);
            let m = LoadedModel::from_checkpoint(&ckpt).unwrap();
            assert_eq!(m.method, method);
            assert_eq!(m.siamese.is_some(), method == Method::Siamese);
            let csv = descriptors_csv(&m.net, &[(Split::Validation, &val)], Execution::Sequential).unwrap();
            assert_eq!(csv.lines().count(), 1 + val.len());
            assert_eq!(csv.lines().next().unwrap().split(',').count(), 4 + 8);
        }
        assert!(train_on_sets(Method::Eigen, &cfg, dims, &train, &val, Execution::Parallel).is_err());
    }

    #[test]
    fn both_presets_are_timed_on_one_batch() {
        let batch = bench_batch(DIMS, 3, 0).unwrap();
        let rows = bench_presets(&[Preset::Default, Preset::Small], 8, &batch, 2, Execution::Sequential).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|(_, t)| t.segments_per_second > 0.0 && t.batch == 3));
    }
}
