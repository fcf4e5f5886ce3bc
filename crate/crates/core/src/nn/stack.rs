use super::layer::{Aux, Layer, LayerSpec};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Activations recorded by a train-mode forward pass.
#[derive(Clone, Debug)]
pub struct Tape {
    inputs: Vec<Tensor>,
    aux: Vec<Aux>,
}

/// Gradient of one layer's parameters; empty for parameter-free layers.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LayerGrad {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Parameter gradients of a whole stack, one entry per layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Grads {
    pub layers: Vec<LayerGrad>,
}

impl Grads {
    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weight.iter_mut().zip(&b.weight) {
                *x += y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.weight.iter_mut().chain(l.bias.iter_mut()).for_each(|v| *v *= s);
        }
    }

    /// Sums a sequence of gradient sets in iteration order.
    pub fn sum<'a>(mut parts: impl Iterator<Item = &'a Grads>) -> Option<Grads> {
        let mut acc = parts.next()?.clone();
        for p in parts {
            acc.add_assign(p);
        }
        Some(acc)
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(|l| l.weight.iter().chain(&l.bias).copied())
    }
}

/// An ordered, statically shape-checked list of layers.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerStack {
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
}

impl LayerStack {
    /// Builds a stack, resolving every layer's shapes and initializing its
    /// parameters from `seed`.
    pub fn new(input_shape: &[usize], specs: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(Error::InvalidStack(format!("invalid input shape {input_shape:?}")));
        }
        let mut layers = Vec::with_capacity(specs.len());
        let mut shape = input_shape.to_vec();
        for (i, spec) in specs.into_iter().enumerate() {
            let mut rng = rng::stream(seed, &[i as u64]);
            let layer = Layer::new(spec, shape, i, &mut rng)?;
            shape = layer.output_shape.clone();
            layers.push(layer);
        }
        Ok(LayerStack {
            input_shape: input_shape.to_vec(),
            layers,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        self.layers
            .last()
            .map(|l| l.output_shape.as_slice())
            .unwrap_or(&self.input_shape)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec.clone()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Every parameter in declaration order (per layer: weights, then biases).
    pub fn param_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(|l| l.weight.iter().chain(&l.bias).copied())
    }

    /// Zeroed gradient buffers matching this stack's parameters.
    pub fn zero_grads(&self) -> Grads {
        Grads {
            layers: self
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weight: vec![0.0; l.weight.len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    /// Overrides the rate of every dropout layer.
    pub fn set_dropout(&mut self, rate: f64) -> Result<()> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::config("dropout", format!("{rate} outside [0, 1)")));
        }
        for l in &mut self.layers {
            if let LayerSpec::Dropout { rate: r } = &mut l.spec {
                *r = rate;
            }
        }
        Ok(())
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        if input.shape() != self.input_shape.as_slice() {
            let kind = self.layers.first().map_or("input", |l| l.spec.kind());
            return Err(Error::ShapeMismatch {
                layer: 0,
                kind,
                expected: self.input_shape.clone(),
                found: input.shape().to_vec(),
            });
        }
        Ok(())
    }

    /// Inference-mode forward pass (dropout disabled, nothing recorded).
    pub fn infer(&self, input: &Tensor) -> Result<Tensor> {
        self.check_input(input)?;
        let mut rng = rng::seeded(0);
        let mut x = input.clone();
        for layer in &self.layers {
            x = layer.forward(&x, Mode::Infer, &mut rng).0;
        }
        Ok(x)
    }

    /// Forward pass. In train mode dropout masks are drawn from a stream keyed
    /// by `dropout_seed`, and the returned tape enables [`Self::backward`].
    pub fn forward(&self, input: &Tensor, mode: Mode, dropout_seed: u64) -> Result<(Tensor, Tape)> {
        self.check_input(input)?;
        let mut tape = Tape {
            inputs: Vec::new(),
            aux: Vec::new(),
        };
        let mut x = input.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut r = rng::stream(dropout_seed, &[i as u64]);
            let (y, aux) = layer.forward(&x, mode, &mut r);
            if mode == Mode::Train {
                tape.inputs.push(x);
                tape.aux.push(aux);
            }
            x = y;
        }
        Ok((x, tape))
    }

    /// Backpropagates `grad_out` through the whole stack, returning the input
    /// gradient and fresh parameter gradients.
    pub fn backward(&self, tape: &Tape, grad_out: &Tensor) -> Result<(Tensor, Grads)> {
        let mut grads = self.zero_grads();
        let gi = self.backward_from(tape, self.layers.len(), grad_out, &mut grads, true)?;
        Ok((gi.expect("input gradient requested"), grads))
    }

    /// Backpropagates through `layers[..end]`, where `grad` is the gradient
    /// with respect to the output of layer `end - 1`. Parameter gradients are
    /// added into `grads`. The input gradient is only computed on request.
    pub fn backward_from(
        &self,
        tape: &Tape,
        end: usize,
        grad: &Tensor,
        grads: &mut Grads,
        need_input_grad: bool,
    ) -> Result<Option<Tensor>> {
        if tape.inputs.len() != self.layers.len() || self.layers.is_empty() && !tape.inputs.is_empty() {
            return Err(Error::NoCachedForward);
        }
        if end > self.layers.len() {
            return Err(Error::InvalidStack(format!(
                "backward from layer {end} of {}",
                self.layers.len()
            )));
        }
        let expected = if end == 0 {
            &self.input_shape
        } else {
            &self.layers[end - 1].output_shape
        };
        if grad.shape() != expected.as_slice() {
            return Err(Error::ShapeMismatch {
                layer: end.saturating_sub(1),
                kind: "gradient",
                expected: expected.clone(),
                found: grad.shape().to_vec(),
            });
        }
        let mut g = grad.clone();
        for i in (0..end).rev() {
            let layer = &self.layers[i];
            let need = need_input_grad || i > 0;
            match layer.backward(&tape.inputs[i], &tape.aux[i], g.data(), &mut grads.layers[i], need) {
                Some(next) => g = next,
                None => return Ok(None),
            }
        }
        Ok(Some(g))
    }
}
