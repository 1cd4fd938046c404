//! Voxel-overlap terms: weighted soft Dice and cross-entropy.

use super::{check_pair, LossValue};
use crate::error::{Error, Result};
use crate::volume::{Field3, LabelVolume, ProbVolume};

/// `-mean_c (2 Σ w g p + ε) / (Σ w g + Σ w p + ε)` over the foreground
/// channels (all channels when `include_background`).
pub fn radius_dice_loss(
    gt: &ProbVolume,
    pred: &ProbVolume,
    weights: &Field3,
    epsilon: f64,
    include_background: bool,
) -> Result<LossValue> {
    check_pair(pred, gt)?;
    if weights.shape() != pred.shape() {
        return Err(Error::shape(pred.shape().dims(), weights.shape().dims()));
    }
    let w = weights.data();
    let first = usize::from(!include_background);
    let classes = pred.channels() - first;
    let mut grad = ProbVolume::zeros(pred.channels(), pred.shape());
    let mut total = 0.0;
    for c in first..pred.channels() {
        let (g, p) = (gt.channel(c), pred.channel(c));
        let mut inter = 0.0;
        let mut denom = epsilon;
        for v in 0..w.len() {
            inter += w[v] * g[v] * p[v];
            denom += w[v] * (g[v] + p[v]);
        }
        let numer = 2.0 * inter + epsilon;
        total += numer / denom;
        let scale = -1.0 / (classes as f64 * denom * denom);
        for (v, out) in grad.channel_mut(c).iter_mut().enumerate() {
            *out = scale * w[v] * (2.0 * g[v] * denom - numer);
        }
    }
    Ok(LossValue {
        value: -total / classes as f64,
        grad,
    })
}

/// Unweighted soft Dice over the foreground channels.
pub fn dice_loss(gt: &ProbVolume, pred: &ProbVolume, epsilon: f64) -> Result<LossValue> {
    let ones = Field3::filled(pred.shape(), 1.0);
    radius_dice_loss(gt, pred, &ones, epsilon, false)
}

/// Mean over voxels of `-ln(clamp(p_true, ε, 1))`.
pub fn ce_loss(pred: &ProbVolume, gt: &LabelVolume, epsilon: f64) -> Result<LossValue> {
    if gt.shape() != pred.shape() {
        return Err(Error::shape(pred.shape().dims(), gt.shape().dims()));
    }
    gt.validate(pred.channels())?;
    let n = gt.shape().len();
    let mut grad = ProbVolume::zeros(pred.channels(), pred.shape());
    let mut total = 0.0;
    for (v, &label) in gt.data().iter().enumerate() {
        let idx = label as usize * n + v;
        let p = pred.data()[idx];
        total -= p.clamp(epsilon, 1.0).ln();
        if p > epsilon && p <= 1.0 {
            grad.data_mut()[idx] = -1.0 / (n as f64 * p);
        }
    }
    Ok(LossValue {
        value: total / n as f64,
        grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{one_hot, Shape3, VoxelSpacing};

    fn labels() -> LabelVolume {
        let s = Shape3::new(3, 2, 2).unwrap();
        LabelVolume::new(s, VoxelSpacing::default(), vec![0, 1, 2, 1, 0, 0, 2, 2, 1, 0, 1, 0]).unwrap()
    }

    #[test]
    fn perfect_overlap() {
        let gt = one_hot(&labels(), 3).unwrap();
        let l = dice_loss(&gt, &gt, 1e-5).unwrap();
        assert!((l.value + 1.0).abs() < 1e-12);
        let ce = ce_loss(&gt, &labels(), 1e-5).unwrap();
        assert_eq!(ce.value, 0.0);
    }

    #[test]
    fn uniform_prediction_cross_entropy() {
        let s = Shape3::cube(2);
        let lab = LabelVolume::zeros(s, VoxelSpacing::default());
        let pred = ProbVolume::new(21, s, vec![1.0 / 21.0; 21 * s.len()]).unwrap();
        let ce = ce_loss(&pred, &lab, 1e-5).unwrap();
        assert!((ce.value - 21f64.ln()).abs() < 1e-12);
        assert!((ce.value - 3.0445).abs() < 1e-4);
    }

    #[test]
    fn background_channel_optional() {
        let gt = one_hot(&labels(), 3).unwrap();
        let pred = ProbVolume::new(3, gt.shape(), vec![1.0 / 3.0; gt.data().len()]).unwrap();
        let w = Field3::filled(gt.shape(), 1.0);
        let a = radius_dice_loss(&gt, &pred, &w, 1e-5, false).unwrap();
        let b = radius_dice_loss(&gt, &pred, &w, 1e-5, true).unwrap();
        assert_ne!(a.value, b.value);
        assert!(a.grad.channel(0).iter().all(|&g| g == 0.0));
        assert!(b.grad.channel(0).iter().any(|&g| g != 0.0));
    }
}
