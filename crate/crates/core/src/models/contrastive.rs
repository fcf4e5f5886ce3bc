use std::time::Instant;

use rand::seq::SliceRandom;

use super::mining::{mine_from_descriptors, MiningConfig};
use super::pairs::{sample_pairs, LabeledPair};
use super::train::{accumulate, EpochStats, TrainReport};
use super::{DescriptorNet, SampleSet};
use crate::error::{Error, Result};
use crate::eval;
use crate::nn::{loss_contrastive, Sgd, SgdConfig, Tensor};
use crate::par::Execution;
use crate::rng;

#[derive(Clone, Debug, PartialEq)]
pub struct ContrastiveConfig {
    /// Margin on the squared descriptor distance.
    pub margin: f64,
    /// Positive pairs drawn for the first epoch (as many negatives are
    /// added). Capped at what the training set offers.
    pub initial_positives: usize,
    /// Random positives (plus as many negatives) mixed into every mined
    /// epoch. Zero trains on hard pairs alone.
    pub random_positives: usize,
    pub mining: MiningConfig,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        ContrastiveConfig {
            margin: 1.0,
            initial_positives: 1000,
            random_positives: 0,
            mining: MiningConfig::default(),
        }
    }
}

/// Trains with the contrastive loss. The first epoch uses randomly sampled
/// pairs; every later epoch uses hard pairs mined at the end of the
/// previous one. Training accuracy is the candidate-match accuracy of the
/// training set at epoch end.
pub fn train_contrastive(
    net: DescriptorNet,
    train: &SampleSet,
    val: Option<&SampleSet>,
    ccfg: &ContrastiveConfig,
    cfg: &SgdConfig,
    exec: Execution,
) -> Result<(DescriptorNet, TrainReport)> {
    cfg.validate()?;
    ccfg.mining.validate()?;
    if !(ccfg.margin > 0.0) {
        return Err(Error::config("margin", "must be positive"));
    }
    let started = Instant::now();
    let groups = train.groups();
    let available: usize = groups.iter().map(|g| g.len() * g.len().saturating_sub(1) / 2).sum();
    let mut pairs: Vec<LabeledPair> = sample_pairs(&groups, ccfg.initial_positives.min(available), cfg.seed)?;
    let ids: Vec<u64> = train.samples().iter().map(|s| s.sample_id).collect();
    let group_ids = train.group_ids();
    let mut model = net;
    let mut opt = Sgd::new(cfg);
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut shortfall = false;

    for epoch in 0..cfg.epochs {
        let items: Vec<(usize, usize, u8)> = pairs
            .iter()
            .map(|p| {
                (
                    train.position(p.id_a).expect("known id"),
                    train.position(p.id_b).expect("known id"),
                    p.y,
                )
            })
            .collect();
        let mut order: Vec<usize> = (0..items.len()).collect();
        order.shuffle(&mut rng::stream(cfg.seed, &[epoch as u64, 3]));
        let (mut loss, mut seen) = (0.0, 0usize);
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let work: Vec<((usize, usize, u8), u64)> = batch
                .iter()
                .enumerate()
                .map(|(k, &o)| (items[o], rng::derive(cfg.seed, &[epoch as u64, b as u64, k as u64])))
                .collect();
            let m = &model;
            let mut acc = accumulate(exec, &work, &m.stack, None, |&((ia, ib, y), seed), acc| {
                let samples = train.samples();
                // Both branches draw the same dropout mask.
                let (fa, ta) = m.forward_train(&samples[ia].grid, seed)?;
                let (fb, tb) = m.forward_train(&samples[ib].grid, seed)?;
                let l = loss_contrastive(fa.data(), fb.data(), y, ccfg.margin)?;
                let end = m.stack.layers().len();
                m.stack
                    .backward_from(&ta, end, &Tensor::from_vec(l.grad_a), &mut acc.net, false)?;
                m.stack
                    .backward_from(&tb, end, &Tensor::from_vec(l.grad_b), &mut acc.net, false)?;
                acc.loss += l.loss;
                acc.count += 1;
                Ok(())
            })?;
            loss += acc.loss;
            seen += acc.count;
            acc.average();
            opt.step(&mut model.stack, &acc.net)?;
        }

        // Epoch-end snapshot: one descriptor pass serves both the metric
        // and the next epoch's mining.
        let descs = train.describe_all(&model, exec)?;
        let train_accuracy = eval::candidate_accuracy_of(&descs, &group_ids).unwrap_or(0.0);
        if epoch + 1 < cfg.epochs {
            let mining = MiningConfig {
                seed: rng::derive(ccfg.mining.seed, &[epoch as u64]),
                ..ccfg.mining.clone()
            };
            let mined = mine_from_descriptors(&descs, &ids, &group_ids, &mining, exec)?;
            shortfall = mined.shortfall;
            pairs = mined.pairs;
            if ccfg.random_positives > 0 {
                let n = ccfg.random_positives.min(available);
                pairs.extend(sample_pairs(&groups, n, rng::derive(cfg.seed, &[epoch as u64, 5]))?);
            }
        }
        let val_accuracy = match val {
            Some(v) if !v.is_empty() => {
                let d = v.describe_all(&model, exec)?;
                eval::candidate_accuracy_of(&d, &v.group_ids()).ok()
            }
            _ => None,
        };
        epochs.push(EpochStats {
            epoch,
            train_loss: loss / seen.max(1) as f64,
            train_accuracy,
            val_loss: None,
            val_accuracy,
            examples: seen,
            // Describes the pairs this epoch trained on.
            mining_shortfall: epoch > 0 && shortfall,
        });
    }
    Ok((
        model,
        TrainReport {
            regime: "contrastive",
            epochs,
            seconds: started.elapsed().as_secs_f64(),
        },
    ))
}
