//! Per-voxel vessel radius from the ground truth and the Dice weight map
//! derived from it.

use crate::error::{Error, Result};
use crate::morphology::{edt, hard_skeleton, nearest_site_transform};
use crate::volume::{Field3, LabelVolume, VoxelSpacing};

/// Radius in mm on ground-truth foreground, 0 on background.
pub type RadiusMap = Field3;
/// Background 1, foreground in `[1, e]`, larger for thinner vessels.
pub type WeightMap = Field3;

/// Each foreground voxel takes the distance-to-background of its nearest
/// centerline voxel; all foreground classes are pooled.
pub fn compute_radius_map(gt: &LabelVolume, spacing: VoxelSpacing) -> Result<RadiusMap> {
    let fg = gt.foreground();
    if fg.is_empty() {
        return Err(Error::EmptyForeground);
    }
    let dist = edt(&fg, spacing);
    let skel = hard_skeleton(&fg);
    if skel.is_empty() {
        return Err(Error::Invariant(
            "nonempty foreground produced an empty centerline".into(),
        ));
    }
    let (_, nearest) = nearest_site_transform(&skel, spacing);
    let data = fg
        .data()
        .iter()
        .zip(&nearest)
        .map(|(&inside, &site)| if inside { dist.data()[site] } else { 0.0 })
        .collect();
    Field3::new(gt.shape(), data)
}

/// `exp((R_max - R) / (R_max - R_min))` on foreground (radius > 0), 1
/// elsewhere; all ones when the foreground radius is uniform.
pub fn radius_weight_map(radius: &RadiusMap) -> WeightMap {
    let fg = || radius.data().iter().copied().filter(|&r| r > 0.0);
    let r_max = fg().fold(f64::NEG_INFINITY, f64::max);
    let r_min = fg().fold(f64::INFINITY, f64::min);
    let span = r_max - r_min;
    let data = radius
        .data()
        .iter()
        .map(|&r| {
            if r > 0.0 && span > 0.0 {
                ((r_max - r) / span).exp()
            } else {
                1.0
            }
        })
        .collect();
    Field3::new(radius.shape(), data).expect("shape preserved")
}
