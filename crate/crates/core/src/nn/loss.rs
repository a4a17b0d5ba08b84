use super::Tensor4;
use crate::imagecore::{BinaryMask, ProbabilityMap};

/// Guards the Dice denominator against empty masks.
pub const DICE_EPSILON: f64 = 1e-7;

/// Soft Dice loss `-2 Σ t·p / (Σ t + Σ p + ε)` and its gradient with respect to `p`.
pub fn dice_loss_slice(target: &[f64], probs: &[f64]) -> (f64, Vec<f64>) {
    debug_assert_eq!(target.len(), probs.len());
    let (mut inter, mut sum_t, mut sum_p) = (0.0, 0.0, 0.0);
    for (&t, &p) in target.iter().zip(probs) {
        inter += t * p;
        sum_t += t;
        sum_p += p;
    }
    let denom = sum_t + sum_p + DICE_EPSILON;
    let loss = -2.0 * inter / denom;
    let grad = target.iter().map(|&t| -2.0 * (t * denom - inter) / (denom * denom)).collect();
    (loss, grad)
}

/// Dice loss between a ground-truth mask and a prediction; lies in `[-1, 0]`.
pub fn dice_loss(mask: &BinaryMask, pred: &ProbabilityMap) -> f64 {
    assert_eq!((mask.width, mask.height), (pred.width, pred.height), "dice_loss dimension mismatch");
    let target: Vec<f64> = mask.data.iter().map(|&v| v as f64).collect();
    dice_loss_slice(&target, &pred.data).0
}

/// Gradient of [`dice_loss`] with respect to every prediction pixel.
pub fn dice_loss_grad(mask: &BinaryMask, pred: &ProbabilityMap) -> Vec<f64> {
    let target: Vec<f64> = mask.data.iter().map(|&v| v as f64).collect();
    dice_loss_slice(&target, &pred.data).1
}

/// Per-sample Dice loss averaged over the batch, with the gradient of that mean.
/// Returns `(mean_loss, per_sample_losses, grad)`.
pub fn dice_loss_batch(targets: &Tensor4, probs: &Tensor4) -> (f64, Vec<f64>, Tensor4) {
    assert_eq!(targets.dims(), probs.dims(), "dice_loss_batch dimension mismatch");
    let n = probs.batch();
    let mut grad = Vec::with_capacity(probs.len());
    let mut losses = Vec::with_capacity(n);
    for b in 0..n {
        let (l, g) = dice_loss_slice(targets.item(b), probs.item(b));
        losses.push(l);
        grad.extend(g.into_iter().map(|v| v / n as f64));
    }
    let mean = losses.iter().sum::<f64>() / n as f64;
    (mean, losses, Tensor4::new(probs.dims(), grad).expect("same dims"))
}
