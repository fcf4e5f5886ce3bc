use rand::Rng as _;

use super::gemm::{gemm_nn, gemm_nt, gemm_tn};
use super::stack::{LayerGrad, Mode};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Layer kind and hyperparameters, without parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum LayerSpec {
    /// Valid-padding 3D convolution over a `[channels, x, y, z]` input.
    Conv3d {
        filters: usize,
        kernel: [usize; 3],
        stride: [usize; 3],
    },
    /// Non-overlapping max pooling; trailing cells that do not fill a
    /// window are dropped.
    MaxPool3d {
        pool: [usize; 3],
    },
    /// Fully connected layer over a 1-D input.
    Dense {
        units: usize,
    },
    Relu,
    Sigmoid,
    /// Softmax over a 1-D input.
    Softmax,
    /// Inverted dropout; identity in inference mode.
    Dropout {
        rate: f64,
    },
    Flatten,
}

impl LayerSpec {
    pub fn conv3d(filters: usize, kernel: usize) -> Self {
        LayerSpec::Conv3d {
            filters,
            kernel: [kernel; 3],
            stride: [1; 3],
        }
    }

    pub fn maxpool3d(pool: usize) -> Self {
        LayerSpec::MaxPool3d { pool: [pool; 3] }
    }

    pub fn dense(units: usize) -> Self {
        LayerSpec::Dense { units }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv3d { .. } => "conv3d",
            LayerSpec::MaxPool3d { .. } => "maxpool3d",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Relu => "relu",
            LayerSpec::Sigmoid => "sigmoid",
            LayerSpec::Softmax => "softmax",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Flatten => "flatten",
        }
    }

    /// Output shape for a given input shape, or why the input is unsuitable.
    pub(crate) fn output_shape(&self, input: &[usize]) -> std::result::Result<Vec<usize>, String> {
        match self {
            LayerSpec::Conv3d {
                filters,
                kernel,
                stride,
            } => {
                if input.len() != 4 {
                    return Err("expects a [channels, x, y, z] input".into());
                }
                if *filters == 0 || kernel.contains(&0) || stride.contains(&0) {
                    return Err("filters, kernel and stride must be positive".into());
                }
                let mut out = vec![*filters];
                for a in 0..3 {
                    if input[a + 1] < kernel[a] {
                        return Err(format!(
                            "kernel {} larger than input extent {} on axis {a}",
                            kernel[a],
                            input[a + 1]
                        ));
                    }
                    out.push((input[a + 1] - kernel[a]) / stride[a] + 1);
                }
                Ok(out)
            }
            LayerSpec::MaxPool3d { pool } => {
                if input.len() != 4 {
                    return Err("expects a [channels, x, y, z] input".into());
                }
                if pool.contains(&0) {
                    return Err("pool dims must be positive".into());
                }
                let mut out = vec![input[0]];
                for a in 0..3 {
                    let o = input[a + 1] / pool[a];
                    if o == 0 {
                        return Err(format!("pool {} larger than input extent {}", pool[a], input[a + 1]));
                    }
                    out.push(o);
                }
                Ok(out)
            }
            LayerSpec::Dense { units } => {
                if input.len() != 1 {
                    return Err("expects a 1-D input (add a flatten layer)".into());
                }
                if *units == 0 {
                    return Err("units must be positive".into());
                }
                Ok(vec![*units])
            }
            LayerSpec::Softmax => {
                if input.len() != 1 {
                    return Err("expects a 1-D input".into());
                }
                Ok(input.to_vec())
            }
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(rate) {
                    return Err(format!("dropout rate {rate} outside [0, 1)"));
                }
                Ok(input.to_vec())
            }
            LayerSpec::Relu | LayerSpec::Sigmoid => Ok(input.to_vec()),
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
        }
    }

    /// (weight count, bias count, fan-in) for a given input shape.
    pub(crate) fn param_sizes(&self, input: &[usize]) -> (usize, usize, usize) {
        match self {
            LayerSpec::Conv3d { filters, kernel, .. } => {
                let fan_in = input[0] * kernel.iter().product::<usize>();
                (filters * fan_in, *filters, fan_in)
            }
            LayerSpec::Dense { units } => (units * input[0], *units, input[0]),
            _ => (0, 0, 0),
        }
    }
}

/// Per-layer values a backward pass needs beyond the layer input.
#[derive(Clone, Debug)]
pub(crate) enum Aux {
    None,
    Argmax(Vec<u32>),
    Mask(Vec<f64>),
    Output(Tensor),
}

/// A layer with its resolved shapes and parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub spec: LayerSpec,
    pub input_shape: Vec<usize>,
    pub output_shape: Vec<usize>,
    /// Conv: `[filters, channels, kx, ky, kz]`; dense: `[units, inputs]`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

struct ConvGeometry {
    channels: usize,
    input: [usize; 3],
    kernel: [usize; 3],
    stride: [usize; 3],
    output: [usize; 3],
}

impl ConvGeometry {
    fn rows(&self) -> usize {
        self.channels * self.kernel.iter().product::<usize>()
    }

    fn positions(&self) -> usize {
        self.output.iter().product()
    }

    /// Unfolds receptive fields into a `rows x positions` matrix.
    fn im2col(&self, input: &[f64], col: &mut [f64]) {
        let [_, ny, nz] = self.input;
        let [kx, ky, kz] = self.kernel;
        let [sx, sy, sz] = self.stride;
        let [ox, oy, oz] = self.output;
        let p = self.positions();
        let mut r = 0;
        for c in 0..self.channels {
            for a in 0..kx {
                for b in 0..ky {
                    for d in 0..kz {
                        let row = &mut col[r * p..(r + 1) * p];
                        let mut q = 0;
                        for i in 0..ox {
                            for j in 0..oy {
                                let base = ((c * self.input[0] + i * sx + a) * ny + j * sy + b) * nz + d;
                                if sz == 1 {
                                    row[q..q + oz].copy_from_slice(&input[base..base + oz]);
                                } else {
                                    for k in 0..oz {
                                        row[q + k] = input[base + k * sz];
                                    }
                                }
                                q += oz;
                            }
                        }
                        r += 1;
                    }
                }
            }
        }
    }

    /// Adjoint of [`im2col`]: scatter-adds columns back into input layout.
    fn col2im(&self, col: &[f64], grad_in: &mut [f64]) {
        let [_, ny, nz] = self.input;
        let [kx, ky, kz] = self.kernel;
        let [sx, sy, sz] = self.stride;
        let [ox, oy, oz] = self.output;
        let p = self.positions();
        let mut r = 0;
        for c in 0..self.channels {
            for a in 0..kx {
                for b in 0..ky {
                    for d in 0..kz {
                        let row = &col[r * p..(r + 1) * p];
                        let mut q = 0;
                        for i in 0..ox {
                            for j in 0..oy {
                                let base = ((c * self.input[0] + i * sx + a) * ny + j * sy + b) * nz + d;
                                for k in 0..oz {
                                    grad_in[base + k * sz] += row[q + k];
                                }
                                q += oz;
                            }
                        }
                        r += 1;
                    }
                }
            }
        }
    }
}

impl Layer {
    /// Resolves shapes and draws He-uniform weights (biases start at zero).
    pub(crate) fn new(spec: LayerSpec, input_shape: Vec<usize>, index: usize, rng: &mut Rng) -> Result<Self> {
        let output_shape = spec
            .output_shape(&input_shape)
            .map_err(|msg| Error::InvalidStack(format!("layer {index} ({}): {msg}", spec.kind())))?;
        let (nw, nb, fan_in) = spec.param_sizes(&input_shape);
        let limit = if fan_in > 0 { (6.0 / fan_in as f64).sqrt() } else { 0.0 };
        let weight = (0..nw).map(|_| rng.random_range(-limit..=limit)).collect();
        Ok(Layer {
            spec,
            input_shape,
            output_shape,
            weight,
            bias: vec![0.0; nb],
        })
    }

    pub fn has_params(&self) -> bool {
        !self.weight.is_empty()
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    fn conv_geometry(&self) -> ConvGeometry {
        let LayerSpec::Conv3d { kernel, stride, .. } = &self.spec else {
            unreachable!("conv geometry of a non-conv layer")
        };
        let i = &self.input_shape;
        let o = &self.output_shape;
        ConvGeometry {
            channels: i[0],
            input: [i[1], i[2], i[3]],
            kernel: *kernel,
            stride: *stride,
            output: [o[1], o[2], o[3]],
        }
    }

    pub(crate) fn forward(&self, input: &Tensor, mode: Mode, rng: &mut Rng) -> (Tensor, Aux) {
        let x = input.data();
        match &self.spec {
            LayerSpec::Conv3d { filters, .. } => {
                let g = self.conv_geometry();
                let (k, p) = (g.rows(), g.positions());
                let mut col = vec![0.0; k * p];
                g.im2col(x, &mut col);
                let mut out = vec![0.0; filters * p];
                for (f, row) in out.chunks_mut(p).enumerate() {
                    row.fill(self.bias[f]);
                }
                gemm_nn(*filters, k, p, &self.weight, &col, 1.0, &mut out);
                (self.tensor(out), Aux::None)
            }
            LayerSpec::MaxPool3d { pool } => {
                let (out, arg) = maxpool_forward(&self.input_shape, &self.output_shape, *pool, x);
                (self.tensor(out), Aux::Argmax(arg))
            }
            LayerSpec::Dense { units } => {
                let n_in = self.input_shape[0];
                let out = (0..*units)
                    .map(|u| {
                        let w = &self.weight[u * n_in..(u + 1) * n_in];
                        self.bias[u] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
                    })
                    .collect();
                (self.tensor(out), Aux::None)
            }
            LayerSpec::Relu => (self.tensor(x.iter().map(|&v| v.max(0.0)).collect()), Aux::None),
            LayerSpec::Sigmoid => {
                let out = self.tensor(x.iter().map(|&v| sigmoid(v)).collect());
                (out.clone(), Aux::Output(out))
            }
            LayerSpec::Softmax => {
                let out = self.tensor(softmax(x));
                (out.clone(), Aux::Output(out))
            }
            LayerSpec::Dropout { rate } => {
                if mode == Mode::Infer || *rate == 0.0 {
                    return (input.clone(), Aux::None);
                }
                let keep = 1.0 - rate;
                let mask: Vec<f64> = (0..x.len())
                    .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                    .collect();
                let out = x.iter().zip(&mask).map(|(a, m)| a * m).collect();
                (self.tensor(out), Aux::Mask(mask))
            }
            LayerSpec::Flatten => (input.clone().reshaped(self.output_shape.clone()), Aux::None),
        }
    }

    /// Accumulates parameter gradients into `grad` and returns the input
    /// gradient when `need_input_grad` is set.
    pub(crate) fn backward(
        &self,
        input: &Tensor,
        aux: &Aux,
        grad_out: &[f64],
        grad: &mut LayerGrad,
        need_input_grad: bool,
    ) -> Option<Tensor> {
        let x = input.data();
        match &self.spec {
            LayerSpec::Conv3d { filters, .. } => {
                let g = self.conv_geometry();
                let (k, p) = (g.rows(), g.positions());
                let mut col = vec![0.0; k * p];
                g.im2col(x, &mut col);
                gemm_nt(*filters, p, k, grad_out, &col, 1.0, &mut grad.weight);
                for (f, row) in grad_out.chunks(p).enumerate() {
                    grad.bias[f] += row.iter().sum::<f64>();
                }
                if !need_input_grad {
                    return None;
                }
                gemm_tn(k, *filters, p, &self.weight, grad_out, 0.0, &mut col);
                let mut gi = vec![0.0; x.len()];
                g.col2im(&col, &mut gi);
                Some(self.input_tensor(gi))
            }
            LayerSpec::MaxPool3d { .. } => {
                let Aux::Argmax(arg) = aux else {
                    unreachable!("maxpool tape without argmax")
                };
                let mut gi = vec![0.0; x.len()];
                for (g, &a) in grad_out.iter().zip(arg) {
                    gi[a as usize] += g;
                }
                Some(self.input_tensor(gi))
            }
            LayerSpec::Dense { units } => {
                let n_in = self.input_shape[0];
                for u in 0..*units {
                    let g = grad_out[u];
                    grad.bias[u] += g;
                    if g != 0.0 {
                        for (w, &xi) in grad.weight[u * n_in..(u + 1) * n_in].iter_mut().zip(x) {
                            *w += g * xi;
                        }
                    }
                }
                if !need_input_grad {
                    return None;
                }
                let mut gi = vec![0.0; n_in];
                for u in 0..*units {
                    let g = grad_out[u];
                    if g != 0.0 {
                        for (acc, &w) in gi.iter_mut().zip(&self.weight[u * n_in..(u + 1) * n_in]) {
                            *acc += g * w;
                        }
                    }
                }
                Some(self.input_tensor(gi))
            }
            LayerSpec::Relu => Some(
                self.input_tensor(
                    x.iter()
                        .zip(grad_out)
                        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
                        .collect(),
                ),
            ),
            LayerSpec::Sigmoid => {
                let Aux::Output(y) = aux else {
                    unreachable!("sigmoid tape without output")
                };
                Some(
                    self.input_tensor(
                        y.data()
                            .iter()
                            .zip(grad_out)
                            .map(|(&s, &g)| g * s * (1.0 - s))
                            .collect(),
                    ),
                )
            }
            LayerSpec::Softmax => {
                let Aux::Output(y) = aux else {
                    unreachable!("softmax tape without output")
                };
                let y = y.data();
                let dot: f64 = y.iter().zip(grad_out).map(|(a, b)| a * b).sum();
                Some(self.input_tensor(y.iter().zip(grad_out).map(|(&s, &g)| s * (g - dot)).collect()))
            }
            LayerSpec::Dropout { .. } => match aux {
                Aux::Mask(mask) => Some(self.input_tensor(grad_out.iter().zip(mask).map(|(g, m)| g * m).collect())),
                _ => Some(self.input_tensor(grad_out.to_vec())),
            },
            LayerSpec::Flatten => Some(self.input_tensor(grad_out.to_vec())),
        }
    }

    fn tensor(&self, data: Vec<f64>) -> Tensor {
        Tensor::new(self.output_shape.clone(), data).expect("layer output matches its declared shape")
    }

    fn input_tensor(&self, data: Vec<f64>) -> Tensor {
        Tensor::new(self.input_shape.clone(), data).expect("input gradient matches the input shape")
    }
}

fn maxpool_forward(input: &[usize], output: &[usize], pool: [usize; 3], x: &[f64]) -> (Vec<f64>, Vec<u32>) {
    let (nx, ny, nz) = (input[1], input[2], input[3]);
    let (ox, oy, oz) = (output[1], output[2], output[3]);
    let n = output.iter().product();
    let mut out = Vec::with_capacity(n);
    let mut arg = Vec::with_capacity(n);
    for c in 0..input[0] {
        for i in 0..ox {
            for j in 0..oy {
                for k in 0..oz {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = 0usize;
                    for a in 0..pool[0] {
                        for b in 0..pool[1] {
                            let row = ((c * nx + i * pool[0] + a) * ny + j * pool[1] + b) * nz + k * pool[2];
                            for d in 0..pool[2] {
                                let v = x[row + d];
                                if v > best {
                                    best = v;
                                    best_idx = row + d;
                                }
                            }
                        }
                    }
                    out.push(best);
                    arg.push(best_idx as u32);
                }
            }
        }
    }
    (out, arg)
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}
