//! Per-structure evaluation metrics. Metrics that are undefined for a
//! pair of masks (typically both empty) return `None`.

mod report;

pub use report::{
    case_metrics, CaseMetrics, ClassMetrics, CohortReport, FprEntry, GroupSummary, MeanSd, MetricSummary,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morphology::{edt, hard_skeleton, nearest_site_transform};
use crate::volume::{BinaryVolume, Field3, LabelVolume, VoxelSpacing, NEIGHBORS_6};

/// `2|P ∩ G| / (|P| + |G|)`; `None` when both are empty.
pub fn dice_metric(pred: &BinaryVolume, gt: &BinaryVolume) -> Result<Option<f64>> {
    pred.check_same_shape(gt)?;
    let total = pred.count() + gt.count();
    if total == 0 {
        return Ok(None);
    }
    Ok(Some(2.0 * pred.intersection_count(gt) as f64 / total as f64))
}

/// Centerline Dice on hard skeletons; 0 when exactly one skeleton is empty,
/// `None` when both are.
pub fn cldice_metric(pred: &BinaryVolume, gt: &BinaryVolume) -> Result<Option<f64>> {
    pred.check_same_shape(gt)?;
    let skel_pred = hard_skeleton(pred);
    let skel_gt = hard_skeleton(gt);
    match (skel_pred.is_empty(), skel_gt.is_empty()) {
        (true, true) => return Ok(None),
        (true, false) | (false, true) => return Ok(Some(0.0)),
        _ => {}
    }
    let t_prec = skel_pred.intersection_count(gt) as f64 / skel_pred.count() as f64;
    let t_sens = skel_gt.intersection_count(pred) as f64 / skel_gt.count() as f64;
    if t_prec + t_sens == 0.0 {
        return Ok(Some(0.0));
    }
    Ok(Some(2.0 * t_prec * t_sens / (t_prec + t_sens)))
}

/// Foreground voxels with at least one face neighbor outside the mask
/// (positions outside the grid count as outside).
pub fn surface(mask: &BinaryVolume) -> BinaryVolume {
    let shape = mask.shape();
    let data = mask.data();
    let out = (0..shape.len())
        .map(|i| {
            data[i] && {
                let c = shape.coords(i);
                NEIGHBORS_6.iter().any(|&d| shape.offset(c, d).is_none_or(|j| !data[j]))
            }
        })
        .collect();
    BinaryVolume::new(shape, out).expect("shape preserved")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hd95 {
    Defined(f64),
    BothEmpty,
    /// Exactly one mask is empty.
    MissingStructure,
}

impl Hd95 {
    pub fn value(&self) -> Option<f64> {
        match self {
            Hd95::Defined(v) => Some(*v),
            _ => None,
        }
    }
}

/// Linear-interpolation percentile of sorted values, `q` in `[0, 100]`.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn directed_surface_distances(from: &BinaryVolume, to: &BinaryVolume, spacing: VoxelSpacing) -> Vec<f64> {
    let (d2, _) = nearest_site_transform(to, spacing);
    from.data()
        .iter()
        .zip(d2)
        .filter(|(&s, _)| s)
        .map(|(_, d)| d.sqrt())
        .collect()
}

/// 95th percentile (mm) of the pooled surface-to-surface distances in both
/// directions.
pub fn hd95(pred: &BinaryVolume, gt: &BinaryVolume, spacing: VoxelSpacing) -> Result<Hd95> {
    pred.check_same_shape(gt)?;
    match (pred.is_empty(), gt.is_empty()) {
        (true, true) => return Ok(Hd95::BothEmpty),
        (true, false) | (false, true) => return Ok(Hd95::MissingStructure),
        _ => {}
    }
    // a one-voxel background margin keeps surfaces and distances unchanged
    let ((la, ha), (lb, hb)) = pred.support_box(1).zip(gt.support_box(1)).expect("both non-empty");
    let lo = std::array::from_fn(|k| la[k].min(lb[k]));
    let hi = std::array::from_fn(|k| ha[k].max(hb[k]));
    let (pred, gt) = (pred.crop(lo, hi), gt.crop(lo, hi));
    let (sp, sg) = (surface(&pred), surface(&gt));
    let mut d = directed_surface_distances(&sp, &sg, spacing);
    d.extend(directed_surface_distances(&sg, &sp, spacing));
    d.sort_by(f64::total_cmp);
    Ok(Hd95::Defined(percentile_sorted(&d, 95.0)))
}

/// Fraction of ground-truth-absent cases in which the prediction has at
/// least `min_voxels` voxels of the class. `None` without such cases.
pub fn absent_artery_fpr<'a>(
    cohort: impl IntoIterator<Item = (&'a LabelVolume, &'a LabelVolume)>,
    class_id: u16,
    min_voxels: usize,
) -> Option<f64> {
    absent_rate(
        cohort
            .into_iter()
            .map(|(pred, gt)| (gt.count(class_id), pred.count(class_id))),
        min_voxels,
    )
}

/// [`absent_artery_fpr`] on precomputed `(gt_voxels, pred_voxels)` counts.
pub fn absent_rate(counts: impl IntoIterator<Item = (usize, usize)>, min_voxels: usize) -> Option<f64> {
    let (mut absent, mut hallucinated) = (0usize, 0usize);
    for (gt, pred) in counts {
        if gt == 0 {
            absent += 1;
            if pred >= min_voxels.max(1) {
                hallucinated += 1;
            }
        }
    }
    (absent > 0).then(|| hallucinated as f64 / absent as f64)
}

/// Twice the mean distance-to-background (mm) over the class centerline.
pub fn mean_diameter(seg: &LabelVolume, class_id: u16, spacing: VoxelSpacing) -> Option<f64> {
    let mask = seg.class_mask(class_id);
    if mask.is_empty() {
        return None;
    }
    let dist = edt(&mask, spacing);
    let skel = hard_skeleton(&mask);
    let radii: Vec<f64> = skel
        .data()
        .iter()
        .zip(dist.data())
        .filter(|(&s, _)| s)
        .map(|(_, &d)| d)
        .collect();
    if radii.is_empty() {
        return None;
    }
    Some(2.0 * radii.iter().sum::<f64>() / radii.len() as f64)
}

/// Mean foreground intensity over the (population) standard deviation of
/// the background; `None` for a constant background.
pub fn snr_estimate(image: &Field3, fg: &BinaryVolume) -> Result<Option<f64>> {
    if image.shape() != fg.shape() {
        return Err(Error::shape(image.shape().dims(), fg.shape().dims()));
    }
    if fg.is_empty() || fg.is_full() {
        return Err(Error::InvalidParameter(
            "SNR needs both foreground and background voxels".into(),
        ));
    }
    let (mut fg_sum, mut fg_n) = (0.0, 0usize);
    let mut bg = Vec::new();
    for (&v, &inside) in image.data().iter().zip(fg.data()) {
        if inside {
            fg_sum += v;
            fg_n += 1;
        } else {
            bg.push(v);
        }
    }
    let mean_bg = bg.iter().sum::<f64>() / bg.len() as f64;
    let var_bg = bg.iter().map(|v| (v - mean_bg).powi(2)).sum::<f64>() / bg.len() as f64;
    if var_bg == 0.0 {
        return Ok(None);
    }
    Ok(Some(fg_sum / fg_n as f64 / var_bg.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Shape3;

    fn cube(s: Shape3, lo: [usize; 3], side: usize) -> BinaryVolume {
        BinaryVolume::from_fn(s, |x, y, z| {
            [x, y, z].iter().zip(lo).all(|(&c, l)| c >= l && c < l + side)
        })
    }

    #[test]
    fn dice_cases() {
        let s = Shape3::cube(6);
        let a = cube(s, [0, 0, 0], 2);
        assert_eq!(dice_metric(&a, &a).unwrap(), Some(1.0));
        assert_eq!(dice_metric(&a, &cube(s, [3, 3, 3], 2)).unwrap(), Some(0.0));
        let shifted = BinaryVolume::from_fn(s, |x, y, z| (1..3).contains(&x) && y < 2 && z < 2);
        let base = BinaryVolume::from_fn(s, |x, y, z| x < 2 && y < 2 && z < 2);
        assert_eq!(dice_metric(&base, &shifted).unwrap(), Some(0.5));
        assert_eq!(
            dice_metric(&BinaryVolume::empty(s), &BinaryVolume::empty(s)).unwrap(),
            None
        );
        assert_eq!(dice_metric(&a, &BinaryVolume::empty(s)).unwrap(), Some(0.0));
    }

    #[test]
    fn hd95_translation() {
        let s = Shape3::cube(5);
        let mut a = BinaryVolume::empty(s);
        a.set(1, 2, 2, true);
        let mut b = BinaryVolume::empty(s);
        b.set(2, 2, 2, true);
        assert_eq!(hd95(&a, &a, VoxelSpacing::default()).unwrap(), Hd95::Defined(0.0));
        assert_eq!(hd95(&a, &b, VoxelSpacing::default()).unwrap(), Hd95::Defined(1.0));
        let mut c = BinaryVolume::empty(s);
        c.set(1, 2, 3, true);
        let sp = VoxelSpacing::new(1.0, 1.0, 2.0).unwrap();
        assert_eq!(hd95(&a, &c, sp).unwrap(), Hd95::Defined(2.0));
        assert_eq!(hd95(&a, &BinaryVolume::empty(s), sp).unwrap(), Hd95::MissingStructure);
        let e = BinaryVolume::empty(s);
        assert_eq!(hd95(&e, &e, sp).unwrap(), Hd95::BothEmpty);
    }

    #[test]
    fn percentile_interpolates() {
        let v = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile_sorted(&v, 50.0), 2.0);
        assert!((percentile_sorted(&v, 95.0) - 3.8).abs() < 1e-12);
        assert_eq!(percentile_sorted(&[7.0], 95.0), 7.0);
    }

    #[test]
    fn fpr_arithmetic() {
        let counts = [(0, 0), (0, 5), (0, 0), (0, 0), (10, 10)];
        assert_eq!(absent_rate(counts, 1), Some(0.25));
        assert_eq!(absent_rate([(3, 0)], 1), None);
        assert_eq!(absent_rate(counts, 10), Some(0.0));
    }

    #[test]
    fn snr_arithmetic() {
        let s = Shape3::new(4, 1, 1).unwrap();
        let fg = BinaryVolume::new(s, vec![true, true, false, false]).unwrap();
        let img = Field3::new(s, vec![100.0, 100.0, 10.0, -10.0]).unwrap();
        assert_eq!(snr_estimate(&img, &fg).unwrap(), Some(10.0));
        let flat = Field3::new(s, vec![100.0, 100.0, 3.0, 3.0]).unwrap();
        assert_eq!(snr_estimate(&flat, &fg).unwrap(), None);
        assert!(snr_estimate(&img, &BinaryVolume::empty(s)).is_err());
    }
}
