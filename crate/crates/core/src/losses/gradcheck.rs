//! Central-difference verification of analytic gradients.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{
    breakage_cldice_loss, ce_loss, composite_loss, compute_radius_map, cooccurrence_fn_loss, cooccurrence_fp_loss,
    radius_dice_loss, radius_weight_map, LossConfig, LossValue,
};
use crate::error::{Error, Result};
use crate::morphology::keypoint_mask;
use crate::scheme::{AdjacencyMatrix, ClassInfo, ClassScheme, Laterality, SizeGroup};
use crate::volume::{one_hot, LabelVolume, ProbVolume, Shape3, VoxelSpacing};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    /// Step, within `[1e-6, 1e-2]`.
    pub step: f64,
    /// Coordinates drawn without replacement (capped at the volume size).
    pub samples: usize,
    pub seed: u64,
    /// Kink detector threshold. The gap between forward and backward
    /// one-sided differences grows linearly with the step on smooth
    /// functions and stays put across a kink or pooling tie; a coordinate
    /// whose gap departs from linear scaling by more than this (relative to
    /// the slope) is excluded.
    pub kink_tolerance: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-6,
            samples: 256,
            seed: 0,
            kink_tolerance: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Flat index (channel-major) of the worst coordinate.
    pub worst_index: Option<usize>,
    pub evaluated: usize,
    /// Flat indices skipped as kink or tie points.
    pub excluded: Vec<usize>,
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Compares `loss`'s analytic gradient at `pred` against central
/// differences at randomly sampled coordinates. Returns the largest
/// relative error `|a - n| / max(|a|, |n|, 1e-8)` over non-kink points.
pub fn finite_difference_check(
    loss: impl Fn(&ProbVolume) -> Result<LossValue>,
    pred: &ProbVolume,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    if !(1e-6..=1e-2).contains(&opts.step) {
        return Err(Error::InvalidParameter(format!(
            "finite-difference step {} outside [1e-6, 1e-2]",
            opts.step
        )));
    }
    let base = loss(pred)?;
    base.grad.same_layout(pred)?;
    let total = pred.data().len();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut coords = sample(&mut rng, total, opts.samples.min(total)).into_vec();
    coords.sort_unstable();

    let h = opts.step;
    let mut probe = pred.clone();
    let mut eval_at = |idx: usize, delta: f64| -> Result<f64> {
        let orig = probe.data()[idx];
        probe.data_mut()[idx] = orig + delta;
        let v = loss(&probe).map(|l| l.value);
        probe.data_mut()[idx] = orig;
        v
    };
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_index: None,
        evaluated: 0,
        excluded: Vec::new(),
    };
    for idx in coords {
        let plus = eval_at(idx, h)?;
        let minus = eval_at(idx, -h)?;
        let forward = (plus - base.value) / h;
        let backward = (base.value - minus) / h;
        let wide_gap = (eval_at(idx, 2.0 * h)? - 2.0 * base.value + eval_at(idx, -2.0 * h)?) / (2.0 * h);
        let gap = forward - backward;
        let slope = forward.abs().max(backward.abs()).max(1e-8);
        if (wide_gap - 2.0 * gap).abs() > opts.kink_tolerance * slope {
            report.excluded.push(idx);
            continue;
        }
        let numeric = (plus - minus) / (2.0 * h);
        let err = relative(base.grad.data()[idx], numeric);
        report.evaluated += 1;
        if err > report.max_relative_error || report.worst_index.is_none() {
            report.max_relative_error = err;
            report.worst_index = Some(idx);
        }
    }
    Ok(report)
}

/// Softmax of uniform logits in `[-2, 2]`, away from the simplex corners.
pub fn random_simplex(rng: &mut impl Rng, channels: usize, shape: Shape3) -> ProbVolume {
    let n = shape.len();
    let logits: Vec<f64> = (0..channels * n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let mut data = vec![0.0; channels * n];
    for v in 0..n {
        let z: f64 = (0..channels).map(|c| logits[c * n + v].exp()).sum();
        for c in 0..channels {
            data[c * n + v] = logits[c * n + v].exp() / z;
        }
    }
    ProbVolume::new(channels, shape, data).expect("layout matches")
}

/// Labels with foreground drawn uniformly from `1..classes` at `fg_rate`.
pub fn random_labels(rng: &mut impl Rng, classes: usize, shape: Shape3, fg_rate: f64) -> LabelVolume {
    let data = (0..shape.len())
        .map(|_| {
            if rng.random_bool(fg_rate) {
                rng.random_range(1..classes as u16)
            } else {
                0
            }
        })
        .collect();
    LabelVolume::new(shape, VoxelSpacing::default(), data).expect("layout matches")
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteEntry {
    pub term: &'static str,
    pub tolerance: f64,
    pub passed: bool,
    pub report: GradCheckReport,
}

/// Gradient check of every loss term on a random `size`^3 simplex with
/// `classes` channels (chain adjacency `c1 - c2 - ...`, two skeleton
/// iterations). At least 200 coordinates must survive kink exclusion.
pub fn gradient_suite(size: usize, classes: usize, seed: u64, samples: usize) -> Result<Vec<SuiteEntry>> {
    if classes < 3 {
        return Err(Error::InvalidParameter(
            "gradient suite needs at least 3 classes".into(),
        ));
    }
    let shape = Shape3::new(size, size, size)?;
    let scheme = ClassScheme::new(
        (1..classes)
            .map(|id| ClassInfo {
                id: id as u16,
                name: format!("c{id}"),
                size_group: SizeGroup::ALL[(id - 1) % 3],
                laterality: Laterality::Midline,
            })
            .collect(),
    )?;
    let chain: Vec<(usize, usize)> = (1..classes - 1).map(|i| (i - 1, i)).collect();
    let adjacency = AdjacencyMatrix::from_index_pairs(classes - 1, &chain)?;
    let cfg = LossConfig {
        skeleton_iterations: 2,
        ..LossConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pred = random_simplex(&mut rng, classes, shape);
    let labels = random_labels(&mut rng, classes, shape, 0.6);
    let gt = one_hot(&labels, classes)?;
    let weights = radius_weight_map(&compute_radius_map(&labels, labels.spacing())?);
    let keypoints = keypoint_mask(&labels, &adjacency, cfg.keypoint_dilation);
    let opts = GradCheckOptions {
        samples: samples.max(200),
        seed,
        ..GradCheckOptions::default()
    };
    let min_evaluated = 200.min(pred.data().len());

    type Term<'a> = Box<dyn Fn(&ProbVolume) -> Result<LossValue> + 'a>;
    let terms: Vec<(&'static str, f64, Term)> = vec![
        ("ce", 1e-4, Box::new(|p| ce_loss(p, &labels, cfg.epsilon))),
        (
            "dice_weighted",
            1e-4,
            Box::new(|p| radius_dice_loss(&gt, p, &weights, cfg.epsilon, cfg.include_background_in_dice)),
        ),
        (
            "neighbors_cldice",
            1e-3,
            Box::new(|p| breakage_cldice_loss(p, &gt, &cfg)),
        ),
        (
            "cooccurrence_fp",
            1e-4,
            Box::new(|p| cooccurrence_fp_loss(p, &adjacency, &cfg)),
        ),
        (
            "cooccurrence_fn",
            1e-4,
            Box::new(|p| cooccurrence_fn_loss(p, &gt, &adjacency, &keypoints, &cfg)),
        ),
        (
            "total",
            1e-3,
            Box::new(|p| composite_loss(p, &labels, &scheme, &adjacency, &cfg).map(|b| b.total_value())),
        ),
    ];
    terms
        .into_iter()
        .map(|(term, tolerance, f)| {
            let report = finite_difference_check(f, &pred, &opts)?;
            Ok(SuiteEntry {
                term,
                tolerance,
                passed: report.max_relative_error < tolerance && report.evaluated >= min_evaluated,
                report,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Shape3;

    fn square_sum(p: &ProbVolume) -> Result<LossValue> {
        let mut grad = p.clone();
        grad.data_mut().iter_mut().for_each(|g| *g *= 2.0);
        Ok(LossValue {
            value: p.data().iter().map(|v| v * v).sum(),
            grad,
        })
    }

    #[test]
    fn quadratic_is_exact() {
        let s = Shape3::cube(3);
        let data = (0..2 * s.len()).map(|i| 0.5 + 0.4 * (i as f64 * 0.37).sin()).collect();
        let p = ProbVolume::new(2, s, data).unwrap();
        let opts = GradCheckOptions {
            step: 1e-3,
            samples: 54,
            ..Default::default()
        };
        let r = finite_difference_check(square_sum, &p, &opts).unwrap();
        assert_eq!(r.evaluated, 54);
        assert!(r.max_relative_error < 1e-9, "{}", r.max_relative_error);
    }

    #[test]
    fn kink_is_excluded() {
        let s = Shape3::cube(1);
        let p = ProbVolume::new(2, s, vec![0.0, 0.5]).unwrap();
        let abs_sum = |p: &ProbVolume| -> Result<LossValue> {
            let mut grad = p.clone();
            grad.data_mut()
                .iter_mut()
                .for_each(|g| *g = g.signum() * f64::from(*g != 0.0));
            Ok(LossValue {
                value: p.data().iter().map(|v| v.abs()).sum(),
                grad,
            })
        };
        let r = finite_difference_check(abs_sum, &p, &GradCheckOptions::default()).unwrap();
        assert_eq!(r.excluded, vec![0]);
        assert_eq!(r.evaluated, 1);
    }

    #[test]
    fn rejects_bad_step() {
        let p = ProbVolume::zeros(2, Shape3::cube(1));
        let opts = GradCheckOptions {
            step: 0.1,
            ..Default::default()
        };
        assert!(finite_difference_check(square_sum, &p, &opts).is_err());
    }
}
