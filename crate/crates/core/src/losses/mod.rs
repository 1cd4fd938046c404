//! Topology- and adjacency-aware segmentation losses with analytic
//! gradients with respect to every entry of the prediction volume.
//!
//! Every loss takes `C` channels including background (channel 0) and
//! returns a [`LossValue`] whose gradient has the prediction's layout.

mod cldice;
mod composite;
mod cooccurrence;
mod gradcheck;
mod overlap;
mod radius;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morphology::{DEFAULT_KEYPOINT_DILATION, DEFAULT_SKELETON_ITERATIONS};
use crate::volume::ProbVolume;

pub use cldice::breakage_cldice_loss;
pub use composite::{composite_loss, LossBreakdown, PreparedTarget, TermGradients};
pub use cooccurrence::{cooccurrence_fn_loss, cooccurrence_fp_loss, local_occurrence};
pub use gradcheck::{
    finite_difference_check, gradient_suite, random_labels, random_simplex, GradCheckOptions, GradCheckReport,
    SuiteEntry,
};
pub use overlap::{ce_loss, dice_loss, radius_dice_loss};
pub use radius::{compute_radius_map, radius_weight_map, RadiusMap, WeightMap};

/// A scalar loss and its gradient w.r.t. the prediction.
#[derive(Debug, Clone)]
pub struct LossValue {
    pub value: f64,
    pub grad: ProbVolume,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub epsilon: f64,
    pub skeleton_iterations: usize,
    /// Divide neighborhood box sums by 27.
    pub occurrence_normalization: bool,
    pub include_background_in_dice: bool,
    /// `false` replaces the radius weight map by all ones.
    pub radius_weighting: bool,
    /// Divide the connectivity term by the keypoint-mask size.
    pub fn_mask_normalization: bool,
    /// Let the background channel enter the breakage error map.
    pub cldice_include_background: bool,
    pub keypoint_dilation: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda1: 0.5,
            lambda2: 1.0,
            epsilon: 1e-5,
            skeleton_iterations: DEFAULT_SKELETON_ITERATIONS,
            occurrence_normalization: true,
            include_background_in_dice: false,
            radius_weighting: true,
            fn_mask_normalization: true,
            cldice_include_background: false,
            keypoint_dilation: DEFAULT_KEYPOINT_DILATION,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 >= 0.0 && self.lambda1.is_finite()) || !(self.lambda2 >= 0.0 && self.lambda2.is_finite()) {
            return Err(Error::Config(format!(
                "lambda1 and lambda2 must be finite and >= 0, got {} and {}",
                self.lambda1, self.lambda2
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        if self.skeleton_iterations < 1 {
            return Err(Error::Config("skeleton_iterations must be >= 1".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: LossConfig = serde_json::from_str(text).map_err(|e| Error::Config(format!("loss config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain struct serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub(crate) fn occurrence_scale(&self) -> f64 {
        if self.occurrence_normalization {
            1.0 / 27.0
        } else {
            1.0
        }
    }
}

fn check_pair(pred: &ProbVolume, gt: &ProbVolume) -> Result<()> {
    pred.same_layout(gt)?;
    if pred.channels() < 2 {
        return Err(Error::InvalidParameter(
            "losses need background plus at least one foreground channel".into(),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_roundtrip() {
        let cfg = LossConfig::default();
        assert_eq!((cfg.lambda1, cfg.lambda2, cfg.epsilon), (0.5, 1.0, 1e-5));
        assert_eq!(cfg.skeleton_iterations, 5);
        assert_eq!(LossConfig::from_json(&cfg.to_json()).unwrap(), cfg);
        let partial = LossConfig::from_json(r#"{"lambda1":0.2,"occurrence_normalization":false}"#).unwrap();
        assert_eq!(partial.lambda1, 0.2);
        assert!(!partial.occurrence_normalization);
        assert_eq!(partial.lambda2, 1.0);
    }

    #[test]
    fn config_rejects_bad_values() {
        assert!(LossConfig::from_json(r#"{"lambda1":-1}"#).is_err());
        assert!(LossConfig::from_json(r#"{"epsilon":0}"#).is_err());
        assert!(LossConfig::from_json(r#"{"skeleton_iterations":0}"#).is_err());
        assert!(LossConfig::from_json(r#"{"lambda3":1}"#).is_err());
    }
}
