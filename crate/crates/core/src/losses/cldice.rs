//! Centerline Dice whose precision and sensitivity sums are weighted by the
//! neighborhood error map, so skeleton voxels near breaks dominate.

use super::{check_pair, LossConfig, LossValue};
use crate::error::Result;
use crate::morphology::{box_sum_field, soft_skeleton_with_tape};
use crate::volume::ProbVolume;

/// Breakage-weighted clDice loss.
///
/// Foreground probability is `1 - channel 0` for both volumes. Unless
/// `cfg.cldice_include_background` is set, only foreground channels enter
/// the error map: with background included, a two-class problem has
/// identical background and foreground errors and both ratios collapse
/// to 1/2.
pub fn breakage_cldice_loss(pred: &ProbVolume, gt: &ProbVolume, cfg: &LossConfig) -> Result<LossValue> {
    check_pair(pred, gt)?;
    cfg.validate()?;
    let shape = pred.shape();
    let n = shape.len();
    let eps = cfg.epsilon;
    let first = usize::from(!cfg.cldice_include_background);

    let fg_pred: Vec<f64> = pred.channel(0).iter().map(|p| 1.0 - p).collect();
    let fg_gt: Vec<f64> = gt.channel(0).iter().map(|p| 1.0 - p).collect();
    let (skel_pred, tape) = soft_skeleton_with_tape(&fg_pred, shape, cfg.skeleton_iterations)?;
    let (skel_gt, _) = soft_skeleton_with_tape(&fg_gt, shape, cfg.skeleton_iterations)?;

    // signed box-sum difference per channel; E = |diff|
    let diff: Vec<Vec<f64>> = (first..pred.channels())
        .map(|c| {
            let bp = box_sum_field(pred.channel(c), shape);
            let bg = box_sum_field(gt.channel(c), shape);
            bp.iter().zip(&bg).map(|(a, b)| a - b).collect()
        })
        .collect();

    let (mut num_p, mut den_p, mut num_s, mut den_s) = (0.0, 0.0, 0.0, 0.0);
    for (k, d) in diff.iter().enumerate() {
        let c = first + k;
        let (g, p) = (gt.channel(c), pred.channel(c));
        for v in 0..n {
            let e = d[v].abs();
            num_p += skel_pred[v] * g[v] * e;
            den_p += skel_pred[v] * e;
            num_s += skel_gt[v] * p[v] * e;
            den_s += skel_gt[v] * e;
        }
    }
    let mut grad = ProbVolume::zeros(pred.channels(), shape);
    if den_p < eps && den_s < eps {
        return Ok(LossValue { value: -1.0, grad });
    }
    let (den_p, den_s) = (den_p + eps, den_s + eps);
    let t_prec = num_p / den_p;
    let t_sens = num_s / den_s;
    let sum = t_prec + t_sens + eps;
    let value = -2.0 * t_prec * t_sens / sum;
    let d_prec = -2.0 * t_sens * (t_sens + eps) / (sum * sum);
    let d_sens = -2.0 * t_prec * (t_prec + eps) / (sum * sum);

    let mut grad_skel = vec![0.0; n];
    for (k, d) in diff.iter().enumerate() {
        let c = first + k;
        let (g, p) = (gt.channel(c), pred.channel(c));
        let mut grad_e = vec![0.0; n];
        let out = grad.channel_mut(c);
        for v in 0..n {
            let e = d[v].abs();
            grad_skel[v] += d_prec * e * (g[v] - t_prec) / den_p;
            out[v] += d_sens * skel_gt[v] * e / den_s;
            let ge = d_prec * skel_pred[v] * (g[v] - t_prec) / den_p + d_sens * skel_gt[v] * (p[v] - t_sens) / den_s;
            grad_e[v] = ge * d[v].signum() * f64::from(d[v] != 0.0);
        }
        for (o, b) in out.iter_mut().zip(box_sum_field(&grad_e, shape)) {
            *o += b;
        }
    }
    let grad_fg = tape.backward(&grad_skel);
    for (o, gf) in grad.channel_mut(0).iter_mut().zip(grad_fg) {
        *o -= gf;
    }
    Ok(LossValue { value, grad })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{one_hot, relaxed_one_hot, LabelVolume, Shape3, VoxelSpacing};

    fn bar() -> LabelVolume {
        let s = Shape3::new(7, 7, 12).unwrap();
        let mut l = LabelVolume::zeros(s, VoxelSpacing::default());
        for z in 1..11 {
            for y in 2..5 {
                for x in 2..5 {
                    l.set(x, y, z, 1);
                }
            }
        }
        l
    }

    #[test]
    fn perfect_prediction_is_fixed_point() {
        let gt = one_hot(&bar(), 2).unwrap();
        let l = breakage_cldice_loss(&gt, &gt, &LossConfig::default()).unwrap();
        assert_eq!(l.value, -1.0);
        assert!(l.grad.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn break_is_penalized() {
        let labels = bar();
        let gt = one_hot(&labels, 2).unwrap();
        let mut broken = labels.clone();
        for y in 2..5 {
            for x in 2..5 {
                broken.set(x, y, 6, 0);
            }
        }
        let pred = relaxed_one_hot(&broken, 2, 0.99).unwrap();
        let l = breakage_cldice_loss(&pred, &gt, &LossConfig::default()).unwrap();
        assert!(l.value > -1.0 && l.value < 0.0, "{}", l.value);
    }

    #[test]
    fn background_channel_degenerates_two_class_case() {
        let labels = bar();
        let gt = one_hot(&labels, 2).unwrap();
        let mut broken = labels.clone();
        broken.set(3, 3, 6, 0);
        let pred = relaxed_one_hot(&broken, 2, 0.9).unwrap();
        let cfg = LossConfig {
            cldice_include_background: true,
            ..LossConfig::default()
        };
        let l = breakage_cldice_loss(&pred, &gt, &cfg).unwrap();
        assert!((l.value + 0.5).abs() < 1e-4, "{}", l.value);
    }
}
