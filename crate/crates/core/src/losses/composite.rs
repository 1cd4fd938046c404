//! The composite objective
//! `CE + weighted Dice + λ1·breakage clDice + λ2·(FP + FN)`.

use serde::{Deserialize, Serialize};

use super::{
    breakage_cldice_loss, ce_loss, compute_radius_map, cooccurrence_fn_loss, cooccurrence_fp_loss, radius_dice_loss,
    radius_weight_map, LossConfig, LossValue, RadiusMap, WeightMap,
};
use crate::error::{Error, Result};
use crate::morphology::keypoint_mask;
use crate::scheme::{AdjacencyMatrix, ClassScheme};
use crate::volume::{one_hot, BinaryVolume, Field3, LabelVolume, ProbVolume};

/// Everything the objective derives from the ground truth alone. Build it
/// once per target and reuse it across predictions.
#[derive(Debug, Clone)]
pub struct PreparedTarget {
    labels: LabelVolume,
    onehot: ProbVolume,
    radius: Option<RadiusMap>,
    weights: WeightMap,
    keypoints: BinaryVolume,
    adjacency: AdjacencyMatrix,
    cfg: LossConfig,
}

impl PreparedTarget {
    pub fn new(gt: &LabelVolume, scheme: &ClassScheme, adjacency: &AdjacencyMatrix, cfg: &LossConfig) -> Result<Self> {
        cfg.validate()?;
        if adjacency.len() != scheme.num_foreground() {
            return Err(Error::shape(
                format!("{} foreground classes", scheme.num_foreground()),
                format!("{}x{} adjacency", adjacency.len(), adjacency.len()),
            ));
        }
        let onehot = one_hot(gt, scheme.num_classes())?;
        // an all-background target has no radii; fall back to unit weights
        let radius = if cfg.radius_weighting && gt.data().iter().any(|&l| l != 0) {
            Some(compute_radius_map(gt, gt.spacing())?)
        } else {
            None
        };
        let weights = match &radius {
            Some(r) => radius_weight_map(r),
            None => Field3::filled(gt.shape(), 1.0),
        };
        Ok(Self {
            labels: gt.clone(),
            onehot,
            radius,
            weights,
            keypoints: keypoint_mask(gt, adjacency, cfg.keypoint_dilation),
            adjacency: adjacency.clone(),
            cfg: cfg.clone(),
        })
    }

    pub fn labels(&self) -> &LabelVolume {
        &self.labels
    }

    pub fn onehot(&self) -> &ProbVolume {
        &self.onehot
    }

    pub fn radius(&self) -> Option<&RadiusMap> {
        self.radius.as_ref()
    }

    pub fn weights(&self) -> &WeightMap {
        &self.weights
    }

    pub fn keypoints(&self) -> &BinaryVolume {
        &self.keypoints
    }

    pub fn config(&self) -> &LossConfig {
        &self.cfg
    }

    pub fn evaluate(&self, pred: &ProbVolume) -> Result<LossBreakdown> {
        pred.same_layout(&self.onehot)?;
        let cfg = &self.cfg;
        let (overlap, structure) = rayon::join(
            || -> Result<(LossValue, LossValue)> {
                Ok((
                    ce_loss(pred, &self.labels, cfg.epsilon)?,
                    radius_dice_loss(
                        &self.onehot,
                        pred,
                        &self.weights,
                        cfg.epsilon,
                        cfg.include_background_in_dice,
                    )?,
                ))
            },
            || -> Result<(LossValue, (LossValue, LossValue))> {
                let cl = breakage_cldice_loss(pred, &self.onehot, cfg)?;
                let fp = cooccurrence_fp_loss(pred, &self.adjacency, cfg)?;
                let fn_ = cooccurrence_fn_loss(pred, &self.onehot, &self.adjacency, &self.keypoints, cfg)?;
                Ok((cl, (fp, fn_)))
            },
        );
        let (ce, dice) = overlap?;
        let (cldice, (fp, fn_)) = structure?;
        Ok(LossBreakdown::assemble(cfg, ce, dice, cldice, fp, fn_))
    }
}

/// Gradients of each term and of the weighted total, in the prediction's
/// layout.
#[derive(Debug, Clone)]
pub struct TermGradients {
    pub ce: ProbVolume,
    pub dice_weighted: ProbVolume,
    pub neighbors_cldice: ProbVolume,
    pub cooccurrence_fp: ProbVolume,
    pub cooccurrence_fn: ProbVolume,
    pub total: ProbVolume,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub ce: f64,
    pub dice_weighted: f64,
    pub neighbors_cldice: f64,
    pub cooccurrence_fp: f64,
    pub cooccurrence_fn: f64,
    /// `cooccurrence_fp + cooccurrence_fn`
    pub cooccurrence: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub total: f64,
    #[serde(skip)]
    pub gradients: Option<TermGradients>,
}

impl LossBreakdown {
    fn assemble(
        cfg: &LossConfig,
        ce: LossValue,
        dice: LossValue,
        cldice: LossValue,
        fp: LossValue,
        fn_: LossValue,
    ) -> Self {
        let (l1, l2) = (cfg.lambda1, cfg.lambda2);
        let cooccurrence = fp.value + fn_.value;
        let total = ce.value + dice.value + l1 * cldice.value + l2 * cooccurrence;
        let mut grad = ce.grad.clone();
        grad.add_scaled(1.0, &dice.grad);
        grad.add_scaled(l1, &cldice.grad);
        grad.add_scaled(l2, &fp.grad);
        grad.add_scaled(l2, &fn_.grad);
        Self {
            ce: ce.value,
            dice_weighted: dice.value,
            neighbors_cldice: cldice.value,
            cooccurrence_fp: fp.value,
            cooccurrence_fn: fn_.value,
            cooccurrence,
            lambda1: l1,
            lambda2: l2,
            total,
            gradients: Some(TermGradients {
                ce: ce.grad,
                dice_weighted: dice.grad,
                neighbors_cldice: cldice.grad,
                cooccurrence_fp: fp.grad,
                cooccurrence_fn: fn_.grad,
                total: grad,
            }),
        }
    }

    pub fn total_value(&self) -> LossValue {
        LossValue {
            value: self.total,
            grad: self.gradients.as_ref().expect("gradients kept").total.clone(),
        }
    }
}

/// One-shot evaluation; prefer [`PreparedTarget`] when the same target is
/// scored repeatedly.
pub fn composite_loss(
    pred: &ProbVolume,
    gt: &LabelVolume,
    scheme: &ClassScheme,
    adjacency: &AdjacencyMatrix,
    cfg: &LossConfig,
) -> Result<LossBreakdown> {
    PreparedTarget::new(gt, scheme, adjacency, cfg)?.evaluate(pred)
}
