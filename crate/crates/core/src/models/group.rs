use std::collections::{BTreeMap, HashMap};
use std::time::Instant;

use rand::seq::SliceRandom;

use super::train::{accumulate, EpochStats, TrainReport};
use super::{Descriptor, DescriptorNet, SampleSet};
use crate::error::{Error, Result};
use crate::eval;
use crate::nn::{loss_categorical_ce, LayerSpec, LayerStack, Mode, Sgd, SgdConfig, Tensor};
use crate::par::Execution;
use crate::rng;

/// A descriptor network trained to classify segments by group, with its
/// dense + softmax classification head.
#[derive(Clone, Debug)]
pub struct GroupClassifier {
    pub net: DescriptorNet,
    /// `[dense(classes), softmax]` over the descriptor.
    pub head: LayerStack,
    /// Group id of each output class.
    pub class_groups: Vec<u64>,
}

impl GroupClassifier {
    /// Class scores `W d + b` (pre-softmax).
    pub fn logits(&self, d: &Descriptor) -> Result<Vec<f64>> {
        let dense = &self.head.layers()[0];
        if d.len() != dense.input_shape[0] {
            return Err(Error::DimensionMismatch {
                context: "classifier head",
                expected: dense.input_shape.clone(),
                found: vec![d.len()],
            });
        }
        Ok(dense
            .bias
            .iter()
            .enumerate()
            .map(|(c, b)| {
                let w = &dense.weight[c * d.len()..(c + 1) * d.len()];
                b + w.iter().zip(&d.0).map(|(x, y)| x * y).sum::<f64>()
            })
            .collect())
    }

    /// Index of the most probable class for a descriptor.
    pub fn predict(&self, d: &Descriptor) -> Result<usize> {
        let probs = self.head.infer(&Tensor::from_vec(d.0.clone()))?;
        Ok(argmax(probs.data()))
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Trains the network to classify samples by group, after dropping groups
/// with fewer than `min_group_size` samples. Each epoch's validation metric
/// is the candidate-match accuracy of the validation descriptors.
pub fn train_group_classifier(
    net: DescriptorNet,
    train: &SampleSet,
    val: Option<&SampleSet>,
    min_group_size: usize,
    cfg: &SgdConfig,
    exec: Execution,
) -> Result<(GroupClassifier, TrainReport)> {
    cfg.validate()?;
    let started = Instant::now();
    let mut sizes: BTreeMap<u64, usize> = BTreeMap::new();
    for s in train.samples() {
        *sizes.entry(s.group_id).or_default() += 1;
    }
    let class_groups: Vec<u64> = sizes
        .iter()
        .filter(|(_, &n)| n >= min_group_size)
        .map(|(&g, _)| g)
        .collect();
    if class_groups.len() < 2 {
        return Err(Error::TooFewClasses(class_groups.len()));
    }
    let class_of: HashMap<u64, usize> = class_groups.iter().enumerate().map(|(c, &g)| (g, c)).collect();
    let items: Vec<(usize, usize)> = train
        .samples()
        .iter()
        .enumerate()
        .filter_map(|(i, s)| class_of.get(&s.group_id).map(|&c| (i, c)))
        .collect();

    let head = LayerStack::new(
        &[net.descriptor_dim()],
        vec![LayerSpec::dense(class_groups.len()), LayerSpec::Softmax],
        rng::derive(cfg.seed, &[0x4845_4144]),
    )?;
    let mut model = GroupClassifier {
        net,
        head,
        class_groups,
    };
    let mut opt_net = Sgd::new(cfg);
    let mut opt_head = Sgd::new(cfg);
    let mut epochs = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..items.len()).collect();
        order.shuffle(&mut rng::stream(cfg.seed, &[epoch as u64, 1]));
        let (mut loss, mut correct, mut seen) = (0.0, 0usize, 0usize);
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let work: Vec<(usize, usize, u64)> = batch
                .iter()
                .enumerate()
                .map(|(k, &o)| {
                    let (i, c) = items[o];
                    (i, c, rng::derive(cfg.seed, &[epoch as u64, b as u64, k as u64]))
                })
                .collect();
            let m = &model;
            let mut acc = accumulate(exec, &work, &m.net.stack, Some(&m.head), |&(i, class, seed), acc| {
                let (desc, tape) = m.net.forward_train(&train.samples()[i].grid, seed)?;
                let (probs, head_tape) = m.head.forward(&desc, Mode::Train, seed ^ 1)?;
                let (l, g_logits) = loss_categorical_ce(&probs, class)?;
                let head_grads = acc.head.as_mut().expect("head accumulator");
                // Softmax and cross-entropy are fused: skip the softmax layer.
                let g_desc = m
                    .head
                    .backward_from(&head_tape, m.head.layers().len() - 1, &g_logits, head_grads, true)?
                    .expect("descriptor gradient");
                m.net
                    .stack
                    .backward_from(&tape, m.net.stack.layers().len(), &g_desc, &mut acc.net, false)?;
                acc.loss += l;
                acc.correct += usize::from(argmax(probs.data()) == class);
                acc.count += 1;
                Ok(())
            })?;
            loss += acc.loss;
            correct += acc.correct;
            seen += acc.count;
            acc.average();
            opt_net.step(&mut model.net.stack, &acc.net)?;
            opt_head.step(&mut model.head, acc.head.as_ref().expect("head grads"))?;
        }
        let val_accuracy = match val {
            Some(v) if !v.is_empty() => {
                let d = v.describe_all(&model.net, exec)?;
                eval::candidate_accuracy_of(&d, &v.group_ids()).ok()
            }
            _ => None,
        };
        epochs.push(EpochStats {
            epoch,
            train_loss: loss / seen.max(1) as f64,
            train_accuracy: correct as f64 / seen.max(1) as f64,
            val_loss: None,
            val_accuracy,
            examples: seen,
            mining_shortfall: false,
        });
    }
    Ok((
        model,
        TrainReport {
            regime: "group",
            epochs,
            seconds: started.elapsed().as_secs_f64(),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::fixtures::{tiny_net, toy_samples};

    fn cfg(epochs: usize) -> SgdConfig {
        SgdConfig {
            learning_rate: 0.02,
            momentum: 0.9,
            batch_size: 8,
            epochs,
            seed: 4,
        }
    }

    #[test]
    fn learns_toy_groups_and_head_links_to_descriptor() {
        let train = toy_samples(10, 12, 1);
        let (model, report) =
            train_group_classifier(tiny_net(1, 0.2), &train, None, 8, &cfg(50), Execution::Parallel).unwrap();
        assert_eq!(report.epochs.len(), 50);
        let final_acc = report.last().unwrap().train_accuracy;
        assert!(final_acc >= 0.9, "training accuracy {final_acc}");
        // The predicted class is the argmax of W d + b.
        for s in train.samples().iter().take(20) {
            let d = model.net.describe(&s.grid).unwrap();
            assert_eq!(model.predict(&d).unwrap(), argmax(&model.logits(&d).unwrap()));
        }
    }

    #[test]
    fn filtering_everything_is_an_error() {
        let train = toy_samples(3, 4, 1);
        let err = train_group_classifier(tiny_net(1, 0.2), &train, None, 5, &cfg(1), Execution::Sequential);
        assert!(matches!(err, Err(Error::TooFewClasses(0))));
    }

    #[test]
    fn sequential_and_parallel_training_agree_bitwise() {
        let train = toy_samples(3, 5, 2);
        let (a, _) = train_group_classifier(tiny_net(1, 0.3), &train, None, 2, &cfg(2), Execution::Sequential).unwrap();
        let (b, _) = train_group_classifier(tiny_net(1, 0.3), &train, None, 2, &cfg(2), Execution::Parallel).unwrap();
        assert!(a
            .net
            .stack
            .param_values()
            .zip(b.net.stack.param_values())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
