use std::time::Instant;

use rand::seq::SliceRandom;

use super::pairs::LabeledPair;
use super::train::{accumulate, EpochStats, TrainReport};
use super::{Descriptor, DescriptorNet, SampleSet};
use crate::error::{Error, Result};
use crate::nn::{loss_binary_ce, LayerSpec, LayerStack, Mode, Sgd, SgdConfig, Tensor};
use crate::par::Execution;
use crate::preprocess::VoxelizedSegment;
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    Left,
    Right,
}

/// Twin descriptor branches over one parameter set, merged by
/// `|a - b| -> dense(64) -> relu -> dense(1) -> sigmoid`.
#[derive(Clone, Debug)]
pub struct SiameseModel {
    net: DescriptorNet,
    pub head: LayerStack,
}

impl SiameseModel {
    pub fn new(net: DescriptorNet, seed: u64) -> Result<Self> {
        let head = LayerStack::new(
            &[net.descriptor_dim()],
            vec![
                LayerSpec::dense(64),
                LayerSpec::Relu,
                LayerSpec::dense(1),
                LayerSpec::Sigmoid,
            ],
            rng::derive(seed, &[0x4d45_5247]),
        )?;
        Ok(SiameseModel { net, head })
    }

    pub fn from_parts(net: DescriptorNet, head: LayerStack) -> Result<Self> {
        if head.input_shape() != [net.descriptor_dim()] || head.output_shape() != [1] {
            return Err(Error::InvalidStack("merge head does not fit the descriptor net".into()));
        }
        Ok(SiameseModel { net, head })
    }

    /// The network a branch evaluates. Both branches resolve to the same
    /// storage.
    pub fn branch(&self, _branch: Branch) -> &DescriptorNet {
        &self.net
    }

    pub fn net(&self) -> &DescriptorNet {
        &self.net
    }

    pub fn into_net(self) -> DescriptorNet {
        self.net
    }

    /// Match probability of two descriptors. Symmetric in its arguments.
    pub fn probability_from_descriptors(&self, a: &Descriptor, b: &Descriptor) -> Result<f64> {
        let diff: Vec<f64> = a.0.iter().zip(&b.0).map(|(x, y)| (x - y).abs()).collect();
        Ok(self.head.infer(&Tensor::from_vec(diff))?.data()[0])
    }

    pub fn match_probability(&self, a: &VoxelizedSegment, b: &VoxelizedSegment) -> Result<f64> {
        let da = self.branch(Branch::Left).describe(a)?;
        let db = self.branch(Branch::Right).describe(b)?;
        self.probability_from_descriptors(&da, &db)
    }
}

fn check_labels(pairs: &[LabeledPair]) -> Result<()> {
    let pos = pairs.iter().filter(|p| p.y == 1).count();
    if pairs.is_empty() || pos == 0 {
        return Err(Error::SingleLabel(0));
    }
    if pos == pairs.len() {
        return Err(Error::SingleLabel(1));
    }
    Ok(())
}

fn resolve(set: &SampleSet, pairs: &[LabeledPair]) -> Result<Vec<(usize, usize, u8)>> {
    pairs
        .iter()
        .map(|p| {
            let a = set
                .position(p.id_a)
                .ok_or(Error::NoEligibleEntries("pair references an unknown sample"))?;
            let b = set
                .position(p.id_b)
                .ok_or(Error::NoEligibleEntries("pair references an unknown sample"))?;
            Ok((a, b, p.y))
        })
        .collect()
}

/// Mean loss and accuracy at threshold 0.5 of a model over labeled pairs.
pub(crate) fn evaluate_pairs(
    model: &SiameseModel,
    set: &SampleSet,
    pairs: &[LabeledPair],
    exec: Execution,
) -> Result<(f64, f64)> {
    let idx = resolve(set, pairs)?;
    let descs = set.describe_all(model.net(), exec)?;
    let (mut loss, mut correct) = (0.0, 0usize);
    for &(a, b, y) in &idx {
        let p = model.probability_from_descriptors(&descs[a], &descs[b])?;
        loss += loss_binary_ce(p, y).0;
        correct += usize::from((p > 0.5) == (y == 1));
    }
    let n = idx.len().max(1) as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Trains twin branches and the merge head with binary cross-entropy.
/// `on_step` runs after every optimizer step.
pub fn train_siamese(
    net: DescriptorNet,
    train: &SampleSet,
    pairs: &[LabeledPair],
    val: Option<(&SampleSet, &[LabeledPair])>,
    cfg: &SgdConfig,
    exec: Execution,
    mut on_step: impl FnMut(&SiameseModel),
) -> Result<(SiameseModel, TrainReport)> {
    cfg.validate()?;
    check_labels(pairs)?;
    let started = Instant::now();
    let items = resolve(train, pairs)?;
    let mut model = SiameseModel::new(net, cfg.seed)?;
    let mut opt_net = Sgd::new(cfg);
    let mut opt_head = Sgd::new(cfg);
    let mut epochs = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..items.len()).collect();
        order.shuffle(&mut rng::stream(cfg.seed, &[epoch as u64, 2]));
        let (mut loss, mut correct, mut seen) = (0.0, 0usize, 0usize);
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let work: Vec<((usize, usize, u8), u64)> = batch
                .iter()
                .enumerate()
                .map(|(k, &o)| (items[o], rng::derive(cfg.seed, &[epoch as u64, b as u64, k as u64])))
                .collect();
            let m = &model;
            let mut acc = accumulate(exec, &work, &m.net.stack, Some(&m.head), |&((ia, ib, y), seed), acc| {
                let samples = train.samples();
                // Both branches draw the same dropout mask.
                let (fa, ta) = m.net.forward_train(&samples[ia].grid, seed)?;
                let (fb, tb) = m.net.forward_train(&samples[ib].grid, seed)?;
                let diff: Vec<f64> = fa.data().iter().zip(fb.data()).map(|(x, y)| (x - y).abs()).collect();
                let (p, th) = m.head.forward(&Tensor::from_vec(diff), Mode::Train, seed ^ 0xC)?;
                let p = p.data()[0];
                let (l, dl_dp) = loss_binary_ce(p, y);
                let g_diff = m
                    .head
                    .backward_from(
                        &th,
                        m.head.layers().len(),
                        &Tensor::from_vec(vec![dl_dp]),
                        acc.head.as_mut().expect("head"),
                        true,
                    )?
                    .expect("merge input gradient");
                let g_a: Vec<f64> = g_diff
                    .data()
                    .iter()
                    .zip(fa.data().iter().zip(fb.data()))
                    .map(|(g, (x, y))| {
                        if x > y {
                            *g
                        } else if x < y {
                            -g
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let g_b: Vec<f64> = g_a.iter().map(|g| -g).collect();
                let end = m.net.stack.layers().len();
                m.net
                    .stack
                    .backward_from(&ta, end, &Tensor::from_vec(g_a), &mut acc.net, false)?;
                m.net
                    .stack
                    .backward_from(&tb, end, &Tensor::from_vec(g_b), &mut acc.net, false)?;
                acc.loss += l;
                acc.correct += usize::from((p > 0.5) == (y == 1));
                acc.count += 1;
                Ok(())
            })?;
            loss += acc.loss;
            correct += acc.correct;
            seen += acc.count;
            acc.average();
            opt_net.step(&mut model.net.stack, &acc.net)?;
            opt_head.step(&mut model.head, acc.head.as_ref().expect("head grads"))?;
            on_step(&model);
        }
        let (val_loss, val_accuracy) = match val {
            Some((set, vp)) if !vp.is_empty() => {
                let (l, a) = evaluate_pairs(&model, set, vp, exec)?;
                (Some(l), Some(a))
            }
            _ => (None, None),
        };
        epochs.push(EpochStats {
            epoch,
            train_loss: loss / seen.max(1) as f64,
            train_accuracy: correct as f64 / seen.max(1) as f64,
            val_loss,
            val_accuracy,
            examples: seen,
            mining_shortfall: false,
        });
    }
    Ok((
        model,
        TrainReport {
            regime: "siamese",
            epochs,
            seconds: started.elapsed().as_secs_f64(),
        },
    ))
}
