//! Central finite-difference verification of backpropagated gradients.

use rand::seq::index::sample;

use super::stack::{Grads, LayerStack, Mode};
use super::tensor::Tensor;
use crate::error::Result;
use crate::rng;

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    /// Perturbation applied to each parameter in both directions.
    pub step: f64,
    /// Stacks with more parameters than this are checked on a seeded sample
    /// of this many parameters.
    pub max_params: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-3,
            max_params: 400,
            seed: 0,
        }
    }
}

/// Address of one scalar parameter in a stack.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamRef {
    pub layer: usize,
    pub bias: bool,
    pub index: usize,
}

fn all_params(stack: &LayerStack) -> Vec<ParamRef> {
    let mut out = Vec::new();
    for (layer, l) in stack.layers().iter().enumerate() {
        out.extend((0..l.weight.len()).map(|index| ParamRef {
            layer,
            bias: false,
            index,
        }));
        out.extend((0..l.bias.len()).map(|index| ParamRef {
            layer,
            bias: true,
            index,
        }));
    }
    out
}

fn param_mut(stack: &mut LayerStack, p: ParamRef) -> &mut f64 {
    let l = &mut stack.layers_mut()[p.layer];
    if p.bias {
        &mut l.bias[p.index]
    } else {
        &mut l.weight[p.index]
    }
}

pub(crate) fn grad_at(grads: &Grads, p: ParamRef) -> f64 {
    let l = &grads.layers[p.layer];
    if p.bias {
        l.bias[p.index]
    } else {
        l.weight[p.index]
    }
}

/// `|a - n| / max(1e-8, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

fn loss_at<F>(stack: &LayerStack, loss_fn: &F, input: &Tensor) -> Result<f64>
where
    F: Fn(&Tensor) -> (f64, Tensor),
{
    let (out, _) = stack.forward(input, Mode::Train, 0)?;
    Ok(loss_fn(&out).0)
}

/// Backpropagated parameter gradients of `loss_fn(stack(input))`.
pub fn analytic_param_grads<F>(stack: &LayerStack, loss_fn: &F, input: &Tensor) -> Result<Grads>
where
    F: Fn(&Tensor) -> (f64, Tensor),
{
    let (out, tape) = stack.forward(input, Mode::Train, 0)?;
    let (_, grad_out) = loss_fn(&out);
    Ok(stack.backward(&tape, &grad_out)?.1)
}

/// Central differences of the loss with respect to the listed parameters.
pub fn numeric_param_grads<F>(
    stack: &LayerStack,
    loss_fn: &F,
    input: &Tensor,
    params: &[ParamRef],
    step: f64,
) -> Result<Vec<f64>>
where
    F: Fn(&Tensor) -> (f64, Tensor),
{
    let mut probe = stack.clone();
    params
        .iter()
        .map(|&p| {
            let orig = *param_mut(&mut probe, p);
            *param_mut(&mut probe, p) = orig + step;
            let plus = loss_at(&probe, loss_fn, input)?;
            *param_mut(&mut probe, p) = orig - step;
            let minus = loss_at(&probe, loss_fn, input)?;
            *param_mut(&mut probe, p) = orig;
            Ok((plus - minus) / (2.0 * step))
        })
        .collect()
}

/// Parameters a check visits: all of them, or a seeded sample for large stacks.
pub fn checked_params(stack: &LayerStack, cfg: &GradCheckConfig) -> Vec<ParamRef> {
    let all = all_params(stack);
    if all.len() <= cfg.max_params {
        return all;
    }
    let mut r = rng::seeded(cfg.seed);
    let mut picked = sample(&mut r, all.len(), cfg.max_params).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| all[i]).collect()
}

/// Largest relative error between analytic and central-difference
/// gradients over the checked parameters. Run with dropout rate 0 (or a
/// fixed dropout seed, which this uses) for a meaningful result.
pub fn gradient_check<F>(stack: &LayerStack, loss_fn: &F, input: &Tensor, cfg: &GradCheckConfig) -> Result<f64>
where
    F: Fn(&Tensor) -> (f64, Tensor),
{
    let params = checked_params(stack, cfg);
    let analytic = analytic_param_grads(stack, loss_fn, input)?;
    let numeric = numeric_param_grads(stack, loss_fn, input, &params, cfg.step)?;
    Ok(params
        .iter()
        .zip(&numeric)
        .map(|(&p, &n)| relative_error(grad_at(&analytic, p), n))
        .fold(0.0, f64::max))
}

/// Central-difference gradient of a scalar function of a vector.
pub fn numeric_gradient<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + step;
            let plus = f(&probe);
            probe[i] = orig - step;
            let minus = f(&probe);
            probe[i] = orig;
            (plus - minus) / (2.0 * step)
        })
        .collect()
}

/// Gradient tolerance for whole stacks (relative error).
pub const STACK_TOLERANCE: f64 = 1e-4;
/// Gradient tolerance for the losses on their own.
pub const LOSS_TOLERANCE: f64 = 1e-6;

/// One entry of [`gradcheck_suite`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckCase {
    pub name: &'static str,
    pub max_relative_error: f64,
    pub tolerance: f64,
}

impl GradCheckCase {
    pub fn passed(&self) -> bool {
        self.max_relative_error < self.tolerance
    }
}

fn uniform(shape: &[usize], seed: u64) -> Tensor {
    use rand::Rng as _;
    let mut r = rng::seeded(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| r.random_range(-1.0..1.0)).collect()).expect("shape matches data")
}

fn max_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max)
}

/// Finite-difference checks of every layer kind and loss: three stacks
/// trained through a loss, then each loss on its own.
pub fn gradcheck_suite(seed: u64) -> Result<Vec<GradCheckCase>> {
    use super::layer::LayerSpec as L;
    use super::loss::{loss_binary_ce, loss_categorical_ce, loss_contrastive};

    let cfg = GradCheckConfig {
        step: 1e-5,
        max_params: 300,
        seed,
    };
    let stack_case = |name, tol| {
        move |e: f64| GradCheckCase {
            name,
            max_relative_error: e,
            tolerance: tol,
        }
    };
    let mut out = Vec::new();

    let s = LayerStack::new(
        &[1, 8, 8, 6],
        vec![
            L::conv3d(3, 3),
            L::maxpool3d(2),
            L::Relu,
            L::Flatten,
            L::dense(1),
            L::Sigmoid,
        ],
        rng::derive(seed, &[1]),
    )?;
    let bce = |o: &Tensor| {
        let (l, g) = loss_binary_ce(o.data()[0], 1);
        (l, Tensor::from_vec(vec![g]))
    };
    let e = gradient_check(&s, &bce, &uniform(&[1, 8, 8, 6], rng::derive(seed, &[2])), &cfg)?;
    out.push(stack_case(
        "conv3d+maxpool3d+relu+dense+sigmoid, binary cross-entropy",
        STACK_TOLERANCE,
    )(e));

    let s = LayerStack::new(
        &[1, 6, 6, 4],
        vec![L::conv3d(2, 3), L::Relu, L::Flatten, L::dense(4), L::Softmax],
        rng::derive(seed, &[3]),
    )?;
    let cce = |o: &Tensor| {
        let p = o.data();
        let mut g = vec![0.0; p.len()];
        g[2] = -1.0 / p[2];
        (-p[2].ln(), Tensor::from_vec(g))
    };
    let e = gradient_check(&s, &cce, &uniform(&[1, 6, 6, 4], rng::derive(seed, &[4])), &cfg)?;
    out.push(stack_case(
        "conv3d+relu+dense+softmax, categorical cross-entropy",
        STACK_TOLERANCE,
    )(e));

    let s = LayerStack::new(&[10], vec![L::dense(8), L::Relu, L::dense(5)], rng::derive(seed, &[5]))?;
    let x = uniform(&[10], rng::derive(seed, &[6]));
    let out_a = s.infer(&x)?.into_data();
    for (y, name) in [
        (1u8, "dense+relu+dense, contrastive y=1"),
        (0, "dense+relu+dense, contrastive y=0"),
    ] {
        // The partner sits close enough that the negative is inside the margin.
        let b: Vec<f64> = out_a.iter().map(|v| v + 0.1).collect();
        let f = move |o: &Tensor| {
            let c = loss_contrastive(o.data(), &b, y, 1.0).expect("equal widths");
            (c.loss, Tensor::from_vec(c.grad_a))
        };
        out.push(stack_case(name, STACK_TOLERANCE)(gradient_check(&s, &f, &x, &cfg)?));
    }

    let h = 1e-6;
    let p = [0.2, 0.7, 0.93];
    let mut e: f64 = 0.0;
    for &pi in &p {
        for y in [0u8, 1] {
            let n = numeric_gradient(|v| loss_binary_ce(v[0], y).0, &[pi], h);
            e = e.max(relative_error(loss_binary_ce(pi, y).1, n[0]));
        }
    }
    out.push(stack_case("binary cross-entropy", LOSS_TOLERANCE)(e));

    let z = uniform(&[5], rng::derive(seed, &[7])).into_data();
    let softmax = |v: &[f64]| {
        let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let ex: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
        let s: f64 = ex.iter().sum();
        ex.into_iter().map(|x| x / s).collect::<Vec<_>>()
    };
    let analytic = loss_categorical_ce(&Tensor::from_vec(softmax(&z)), 3)?.1.into_data();
    let numeric = numeric_gradient(
        |v| {
            loss_categorical_ce(&Tensor::from_vec(softmax(v)), 3)
                .expect("in range")
                .0
        },
        &z,
        h,
    );
    out.push(stack_case("categorical cross-entropy through softmax", LOSS_TOLERANCE)(
        max_error(&analytic, &numeric),
    ));

    let a = uniform(&[6], rng::derive(seed, &[8])).into_data();
    for (y, shift, name) in [(1u8, 0.3, "contrastive y=1"), (0, 0.2, "contrastive y=0 inside margin")] {
        let b: Vec<f64> = a.iter().map(|v| v + shift).collect();
        let c = loss_contrastive(&a, &b, y, 1.0)?;
        let na = numeric_gradient(|v| loss_contrastive(v, &b, y, 1.0).expect("equal widths").loss, &a, h);
        let nb = numeric_gradient(|v| loss_contrastive(&a, v, y, 1.0).expect("equal widths").loss, &b, h);
        let e = max_error(&c.grad_a, &na).max(max_error(&c.grad_b, &nb));
        out.push(stack_case(name, LOSS_TOLERANCE)(e));
    }
    Ok(out)
}
