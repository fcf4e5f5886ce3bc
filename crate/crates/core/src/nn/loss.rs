use super::tensor::Tensor;
use crate::error::{Error, Result};

const CE_EPS: f64 = 1e-12;
const BCE_CLAMP: f64 = 1e-7;

/// Categorical cross-entropy on softmax probabilities.
///
/// Returns `-ln(p[class] + 1e-12)` and the gradient with respect to the
/// softmax *input* (`p - onehot`), which is what a training loop should
/// backpropagate when the softmax is the last layer.
pub fn loss_categorical_ce(probs: &Tensor, class_index: usize) -> Result<(f64, Tensor)> {
    let p = probs.data();
    if class_index >= p.len() {
        return Err(Error::ClassIndexOutOfRange {
            index: class_index,
            width: p.len(),
        });
    }
    let loss = -(p[class_index] + CE_EPS).ln();
    let mut grad = p.to_vec();
    grad[class_index] -= 1.0;
    Ok((loss, Tensor::from_vec(grad).reshaped(probs.shape().to_vec())))
}

/// Binary cross-entropy of a probability `p` against label `y`, with `p`
/// clamped to `[1e-7, 1 - 1e-7]`. Returns the loss and `dloss/dp`.
pub fn loss_binary_ce(p: f64, y: u8) -> (f64, f64) {
    let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
    let y = if y == 0 { 0.0 } else { 1.0 };
    let loss = -(y * p.ln() + (1.0 - y) * (1.0 - p).ln());
    let grad = -y / p + (1.0 - y) / (1.0 - p);
    (loss, grad)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContrastiveLoss {
    pub loss: f64,
    pub distance_sq: f64,
    pub grad_a: Vec<f64>,
    pub grad_b: Vec<f64>,
}

/// `y * d^2 + (1 - y) * max(0, m - d^2)` with `d` the Euclidean distance
/// between the descriptors. The margin applies to the squared distance.
pub fn loss_contrastive(f_a: &[f64], f_b: &[f64], y: u8, margin: f64) -> Result<ContrastiveLoss> {
    if f_a.len() != f_b.len() {
        return Err(Error::DimensionMismatch {
            context: "contrastive loss",
            expected: vec![f_a.len()],
            found: vec![f_b.len()],
        });
    }
    if !(margin > 0.0) {
        return Err(Error::config("margin", "must be positive"));
    }
    let diff: Vec<f64> = f_a.iter().zip(f_b).map(|(a, b)| a - b).collect();
    let d2: f64 = diff.iter().map(|d| d * d).sum();
    let (loss, coef) = if y != 0 {
        (d2, 2.0)
    } else if d2 < margin {
        (margin - d2, -2.0)
    } else {
        (0.0, 0.0)
    };
    let grad_a: Vec<f64> = diff.iter().map(|d| coef * d).collect();
    let grad_b = grad_a.iter().map(|g| -g).collect();
    Ok(ContrastiveLoss {
        loss,
        distance_sq: d2,
        grad_a,
        grad_b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn categorical_examples() {
        let (l, g) = loss_categorical_ce(&Tensor::from_vec(vec![0.25; 4]), 2).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-9);
        assert_eq!(g.data(), &[0.25, 0.25, -0.75, 0.25]);
        let (l, _) = loss_categorical_ce(&Tensor::from_vec(vec![0.0, 1.0]), 1).unwrap();
        assert!(l.abs() < 1e-11);
        assert!(matches!(
            loss_categorical_ce(&Tensor::from_vec(vec![1.0]), 1),
            Err(Error::ClassIndexOutOfRange { index: 1, width: 1 })
        ));
    }

    #[test]
    fn categorical_matches_direct_log() {
        let mut rng = crate::rng::seeded(1);
        for _ in 0..100 {
            let raw: Vec<f64> = (0..6).map(|_| rng.random_range(0.01..1.0)).collect();
            let s: f64 = raw.iter().sum();
            let p: Vec<f64> = raw.iter().map(|v| v / s).collect();
            let c = rng.random_range(0..6);
            let (l, _) = loss_categorical_ce(&Tensor::from_vec(p.clone()), c).unwrap();
            assert!((l - -(p[c] + 1e-12).ln()).abs() < 1e-9);
        }
    }

    #[test]
    fn binary_examples_and_finite_differences() {
        for y in [0, 1] {
            assert!((loss_binary_ce(0.5, y).0 - 2f64.ln()).abs() < 1e-12);
        }
        assert!(loss_binary_ce(1.0 - 1e-7, 1).0 < 1e-6);
        let mut rng = crate::rng::seeded(2);
        for _ in 0..200 {
            let p = rng.random_range(0.01..0.99);
            let y = rng.random_range(0..2u8);
            let h = 1e-6;
            let fd = (loss_binary_ce(p + h, y).0 - loss_binary_ce(p - h, y).0) / (2.0 * h);
            let g = loss_binary_ce(p, y).1;
            assert!((fd - g).abs() / g.abs().max(1e-8) < 1e-6);
        }
    }

    #[test]
    fn contrastive_examples() {
        let a = [0.3, -0.2, 1.0];
        let same = loss_contrastive(&a, &a, 1, 1.0).unwrap();
        assert_eq!(same.loss, 0.0);
        assert!(same.grad_a.iter().chain(&same.grad_b).all(|&g| g == 0.0));
        // d^2 = 0.25
        let near = loss_contrastive(&[0.5, 0.0], &[0.0, 0.0], 0, 1.0).unwrap();
        assert!((near.loss - 0.75).abs() < 1e-12);
        assert_eq!(near.grad_a, vec![-1.0, 0.0]);
        // d^2 = 1.5
        let far = loss_contrastive(&[1.5f64.sqrt(), 0.0], &[0.0, 0.0], 0, 1.0).unwrap();
        assert_eq!(far.loss, 0.0);
        assert!(far.grad_a.iter().chain(&far.grad_b).all(|&g| g == 0.0));
        assert!(loss_contrastive(&[1.0], &[1.0, 2.0], 0, 1.0).is_err());
    }
}
