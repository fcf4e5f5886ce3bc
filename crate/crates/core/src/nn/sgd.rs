use super::stack::{Grads, LayerStack};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 32,
            epochs: 10,
            seed: 0,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("momentum", "must lie in [0, 1)"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs", "must be at least 1"));
        }
        Ok(())
    }
}

/// Momentum SGD: `v <- momentum * v + g; w <- w - lr * v`.
#[derive(Clone, Debug)]
pub struct Sgd {
    pub learning_rate: f64,
    pub momentum: f64,
    velocity: Option<Grads>,
}

impl Sgd {
    pub fn new(cfg: &SgdConfig) -> Self {
        Sgd {
            learning_rate: cfg.learning_rate,
            momentum: cfg.momentum,
            velocity: None,
        }
    }

    pub fn step(&mut self, stack: &mut LayerStack, grads: &Grads) -> Result<()> {
        let shapes_match = grads.layers.len() == stack.layers().len()
            && stack
                .layers()
                .iter()
                .zip(&grads.layers)
                .all(|(l, g)| l.weight.len() == g.weight.len() && l.bias.len() == g.bias.len());
        if !shapes_match {
            return Err(Error::DimensionMismatch {
                context: "sgd gradients",
                expected: stack.layers().iter().map(|l| l.param_count()).collect(),
                found: grads.layers.iter().map(|g| g.weight.len() + g.bias.len()).collect(),
            });
        }
        let velocity = self.velocity.get_or_insert_with(|| stack.zero_grads());
        let (lr, mu) = (self.learning_rate, self.momentum);
        for ((layer, g), v) in stack
            .layers_mut()
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut velocity.layers)
        {
            for ((w, gw), vw) in layer.weight.iter_mut().zip(&g.weight).zip(&mut v.weight) {
                *vw = mu * *vw + gw;
                *w -= lr * *vw;
            }
            for ((b, gb), vb) in layer.bias.iter_mut().zip(&g.bias).zip(&mut v.bias) {
                *vb = mu * *vb + gb;
                *b -= lr * *vb;
            }
        }
        Ok(())
    }
}
