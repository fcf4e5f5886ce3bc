use rand::seq::SliceRandom;

use super::PairExample;
use crate::error::{Error, Result};
use crate::models::train::accumulate;
use crate::nn::{loss_binary_ce, LayerSpec, LayerStack, Mode, Sgd, SgdConfig, Tensor};
use crate::par::{self, Execution};
use crate::rng;

#[derive(Clone, Debug, PartialEq)]
pub struct PairClassifierConfig {
    pub hidden: usize,
    pub sgd: SgdConfig,
}

impl Default for PairClassifierConfig {
    fn default() -> Self {
        PairClassifierConfig {
            hidden: 32,
            sgd: SgdConfig {
                epochs: 100,
                ..SgdConfig::default()
            },
        }
    }
}

/// Match classifier over concatenated descriptors:
/// `[a, b] -> dense(hidden) -> relu -> dense(1) -> sigmoid`.
///
/// Inputs are standardized per feature with statistics of the training
/// pairs. Training sees every pair in both orders and scoring averages the
/// two orders, so the score is symmetric.
#[derive(Clone, Debug)]
pub struct PairClassifier {
    pub stack: LayerStack,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl PairClassifier {
    pub fn from_parts(stack: LayerStack, mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        let width = stack.input_shape().first().copied().unwrap_or(0);
        if stack.input_shape().len() != 1 || width % 2 != 0 || mean.len() != width || std.len() != width {
            return Err(Error::InvalidStack("pair classifier parts disagree".into()));
        }
        Ok(PairClassifier { stack, mean, std })
    }

    pub fn descriptor_dim(&self) -> usize {
        self.mean.len() / 2
    }

    fn input(&self, a: &[f64], b: &[f64]) -> Tensor {
        Tensor::from_vec(
            a.iter()
                .chain(b)
                .zip(self.mean.iter().zip(&self.std))
                .map(|(x, (m, s))| (x - m) / s)
                .collect(),
        )
    }

    pub fn probability(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        let d = self.descriptor_dim();
        if a.len() != d || b.len() != d {
            return Err(Error::DimensionMismatch {
                context: "pair classifier",
                expected: vec![d],
                found: vec![a.len(), b.len()],
            });
        }
        let ab = self.stack.infer(&self.input(a, b))?.data()[0];
        let ba = self.stack.infer(&self.input(b, a))?.data()[0];
        Ok(0.5 * (ab + ba))
    }
}

/// Trains a [`PairClassifier`] with binary cross-entropy.
pub fn train_pair_classifier(
    examples: &[PairExample<'_>],
    cfg: &PairClassifierConfig,
    exec: Execution,
) -> Result<PairClassifier> {
    cfg.sgd.validate()?;
    if cfg.hidden == 0 {
        return Err(Error::config("hidden", "must be positive"));
    }
    let pos = examples.iter().filter(|e| e.2 == 1).count();
    if pos == 0 {
        return Err(Error::SingleLabel(0));
    }
    if pos == examples.len() {
        return Err(Error::SingleLabel(1));
    }
    let d = examples[0].0.len();
    if let Some(bad) = examples.iter().find(|e| e.0.len() != d || e.1.len() != d) {
        return Err(Error::DimensionMismatch {
            context: "pair classifier examples",
            expected: vec![d],
            found: vec![bad.0.len(), bad.1.len()],
        });
    }

    // Both orders contribute the same statistics, so fit on a and b pooled
    // and repeat for the two halves.
    let n = (2 * examples.len()) as f64;
    let mut mean = vec![0.0; d];
    for e in examples {
        for k in 0..d {
            mean[k] += e.0[k] + e.1[k];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for e in examples {
        for k in 0..d {
            var[k] += (e.0[k] - mean[k]).powi(2) + (e.1[k] - mean[k]).powi(2);
        }
    }
    let std: Vec<f64> = var.iter().map(|v| (v / n).sqrt().max(1e-8)).collect();
    let mean: Vec<f64> = mean.iter().chain(&mean).copied().collect();
    let std: Vec<f64> = std.iter().chain(&std).copied().collect();

    let stack = LayerStack::new(
        &[2 * d],
        vec![
            LayerSpec::dense(cfg.hidden),
            LayerSpec::Relu,
            LayerSpec::dense(1),
            LayerSpec::Sigmoid,
        ],
        rng::derive(cfg.sgd.seed, &[0x5041_4952, 0x434c_4600]),
    )?;
    let mut model = PairClassifier { stack, mean, std };
    // Each example appears as (a, b) and (b, a).
    let items: Vec<(usize, bool)> = (0..examples.len()).flat_map(|i| [(i, false), (i, true)]).collect();
    let mut opt = Sgd::new(&cfg.sgd);
    for epoch in 0..cfg.sgd.epochs {
        let mut order = items.clone();
        order.shuffle(&mut rng::stream(cfg.sgd.seed, &[epoch as u64, 4]));
        for batch in order.chunks(cfg.sgd.batch_size) {
            let m = &model;
            let mut acc = accumulate(exec, batch, &m.stack, None, |&(i, swap), acc| {
                let (a, b, y) = examples[i];
                let x = if swap { m.input(b, a) } else { m.input(a, b) };
                let (p, tape) = m.stack.forward(&x, Mode::Train, 0)?;
                let (l, g) = loss_binary_ce(p.data()[0], y);
                m.stack.backward_from(
                    &tape,
                    m.stack.layers().len(),
                    &Tensor::from_vec(vec![g]),
                    &mut acc.net,
                    false,
                )?;
                acc.loss += l;
                acc.count += 1;
                Ok(())
            })?;
            acc.average();
            opt.step(&mut model.stack, &acc.net)?;
        }
    }
    Ok(model)
}

/// Training-set accuracy at threshold 0.5.
pub fn pair_accuracy(model: &PairClassifier, examples: &[PairExample<'_>], exec: Execution) -> Result<f64> {
    let hits = par::map_slice(exec, examples, |&(a, b, y)| {
        model.probability(a, b).map(|p| (p > 0.5) == (y == 1))
    });
    let mut correct = 0usize;
    for h in hits {
        correct += usize::from(h?);
    }
    Ok(correct as f64 / examples.len().max(1) as f64)
}
