//! Soft skeletonization by iterated soft erosion/opening, with a
//! reverse-mode tape for gradients, and the thresholded hard skeleton.
//!
//! Soft erosion is a min-pool over the voxel and its 6 face neighbors (the
//! three axial 3-tap min-pools combined); soft dilation is the 3x3x3
//! max-pool. Both ignore out-of-grid positions. Pooling subgradients go to
//! the extremal element, ties to the lowest linear index.

use crate::error::{Error, Result};
use crate::morphology::edt::edt;
use crate::volume::{BinaryVolume, Field3, Shape3, VoxelSpacing, NEIGHBORS_6};

pub const DEFAULT_SKELETON_ITERATIONS: usize = 5;

fn soft_erode(x: &[f64], shape: Shape3) -> (Vec<f64>, Vec<u32>) {
    let (nx, ny, nz) = (shape.nx, shape.ny, shape.nz);
    let (sy, sz) = (nx, nx * ny);
    let mut out = Vec::with_capacity(x.len());
    let mut arg = Vec::with_capacity(x.len());
    let mut i = 0;
    for z in 0..nz {
        for y in 0..ny {
            for xx in 0..nx {
                let mut best = i;
                let mut consider = |j: usize| {
                    if x[j] < x[best] || (x[j] == x[best] && j < best) {
                        best = j;
                    }
                };
                if z > 0 {
                    consider(i - sz);
                }
                if y > 0 {
                    consider(i - sy);
                }
                if xx > 0 {
                    consider(i - 1);
                }
                if xx + 1 < nx {
                    consider(i + 1);
                }
                if y + 1 < ny {
                    consider(i + sy);
                }
                if z + 1 < nz {
                    consider(i + sz);
                }
                out.push(x[best]);
                arg.push(best as u32);
                i += 1;
            }
        }
    }
    (out, arg)
}

/// One axis of the separable max-pool; `arg` carries source indices so ties
/// resolve to the lowest original index.
fn max_pool_axis(vals: &[f64], arg: &[u32], shape: Shape3, axis: usize) -> (Vec<f64>, Vec<u32>) {
    let stride = shape.stride(axis);
    let len = shape.dims()[axis];
    let mut out_v = Vec::with_capacity(vals.len());
    let mut out_a = Vec::with_capacity(vals.len());
    for i in 0..vals.len() {
        let pos = (i / stride) % len;
        let mut best = i;
        let mut consider = |j: usize| {
            if vals[j] > vals[best] || (vals[j] == vals[best] && arg[j] < arg[best]) {
                best = j;
            }
        };
        if pos > 0 {
            consider(i - stride);
        }
        if pos + 1 < len {
            consider(i + stride);
        }
        out_v.push(vals[best]);
        out_a.push(arg[best]);
    }
    (out_v, out_a)
}

/// 3x3x3 max-pool as three axial passes. The lowest-index maximum of the
/// cube is the lowest-index maximum of its lowest plane holding one, so the
/// separable tie rule matches the direct one.
fn soft_dilate(x: &[f64], shape: Shape3) -> (Vec<f64>, Vec<u32>) {
    let idx: Vec<u32> = (0..x.len() as u32).collect();
    let (v, a) = max_pool_axis(x, &idx, shape, 0);
    let (v, a) = max_pool_axis(&v, &a, shape, 1);
    max_pool_axis(&v, &a, shape, 2)
}

fn scatter(grad: &[f64], arg: &[u32], out: &mut [f64]) {
    for (g, &a) in grad.iter().zip(arg) {
        out[a as usize] += g;
    }
}

struct Level {
    erode_arg: Vec<u32>,
    dilate_arg: Vec<u32>,
    /// `x - open(x) > 0`
    residue_active: Vec<bool>,
    residue: Vec<f64>,
    /// skeleton before this level's update (unused at level 0)
    skel_before: Vec<f64>,
    /// `residue * (1 - skel_before) > 0`
    update_active: Vec<bool>,
}

/// Intermediate state of a forward soft-skeleton pass.
pub struct SkeletonTape {
    shape: Shape3,
    levels: Vec<Level>,
}

/// Soft skeleton of a single-channel field with values in `[0, 1]`.
pub fn soft_skeleton(input: &Field3, iterations: usize) -> Result<Field3> {
    let (skel, _) = soft_skeleton_with_tape(input.data(), input.shape(), iterations)?;
    Field3::new(input.shape(), skel)
}

/// Forward pass that also records what [`SkeletonTape::backward`] needs.
pub fn soft_skeleton_with_tape(input: &[f64], shape: Shape3, iterations: usize) -> Result<(Vec<f64>, SkeletonTape)> {
    if iterations < 1 {
        return Err(Error::InvalidParameter(
            "soft skeleton needs at least one iteration".into(),
        ));
    }
    if input.len() != shape.len() {
        return Err(Error::shape(shape.len(), input.len()));
    }
    let n = input.len();
    let mut levels = Vec::with_capacity(iterations + 1);
    let mut x = input.to_vec();
    let mut skel = vec![0.0; n];
    for j in 0..=iterations {
        let (eroded, erode_arg) = soft_erode(&x, shape);
        let (opened, dilate_arg) = soft_dilate(&eroded, shape);
        let mut residue = vec![0.0; n];
        let mut residue_active = vec![false; n];
        for i in 0..n {
            let r = x[i] - opened[i];
            if r > 0.0 {
                residue[i] = r;
                residue_active[i] = true;
            }
        }
        let skel_before = skel.clone();
        let mut update_active = vec![false; n];
        if j == 0 {
            skel.copy_from_slice(&residue);
        } else {
            for i in 0..n {
                let u = residue[i] - skel[i] * residue[i];
                if u > 0.0 {
                    skel[i] += u;
                    update_active[i] = true;
                }
            }
        }
        levels.push(Level {
            erode_arg,
            dilate_arg,
            residue_active,
            residue,
            skel_before,
            update_active,
        });
        x = eroded;
    }
    Ok((skel, SkeletonTape { shape, levels }))
}

impl SkeletonTape {
    /// Gradient of a scalar w.r.t. the skeleton input, given its gradient
    /// w.r.t. the skeleton output.
    pub fn backward(&self, grad_skel: &[f64]) -> Vec<f64> {
        let n = self.shape.len();
        let k = self.levels.len() - 1;
        let mut grad_residue: Vec<Vec<f64>> = vec![Vec::new(); k + 1];
        let mut g_s = grad_skel.to_vec();
        for j in (1..=k).rev() {
            let lv = &self.levels[j];
            let mut g_r = vec![0.0; n];
            for i in 0..n {
                if lv.update_active[i] {
                    g_r[i] = g_s[i] * (1.0 - lv.skel_before[i]);
                    g_s[i] *= 1.0 - lv.residue[i];
                }
            }
            grad_residue[j] = g_r;
        }
        grad_residue[0] = g_s;

        // x_{j+1} = erode(x_j); walk levels backwards carrying dL/dx_{j+1}.
        let mut g_next = vec![0.0; n];
        for j in (0..=k).rev() {
            let lv = &self.levels[j];
            let mut g_x = vec![0.0; n];
            let mut g_open = vec![0.0; n];
            for i in 0..n {
                if lv.residue_active[i] {
                    g_x[i] = grad_residue[j][i];
                    g_open[i] = -grad_residue[j][i];
                }
            }
            let mut g_eroded = g_next;
            scatter(&g_open, &lv.dilate_arg, &mut g_eroded);
            scatter(&g_eroded, &lv.erode_arg, &mut g_x);
            g_next = g_x;
        }
        g_next
    }
}

/// Iteration count that fully thins `mask`: the number of soft erosions
/// after which nothing is left (at least `ceil(max EDT in voxels) + 1`).
/// A mask with no background never erodes; the largest grid extent is used.
pub fn hard_skeleton_iterations(mask: &BinaryVolume) -> usize {
    let shape = mask.shape();
    let cap = shape.nx.max(shape.ny).max(shape.nz) + 1;
    let max_dist = edt(mask, VoxelSpacing::default()).max();
    if !max_dist.is_finite() {
        return cap;
    }
    let mut x = mask.data().to_vec();
    let mut depth = 0;
    while x.iter().any(|&b| b) && depth < cap {
        x = (0..x.len())
            .map(|i| {
                let c = shape.coords(i);
                x[i] && NEIGHBORS_6.iter().filter_map(|&d| shape.offset(c, d)).all(|j| x[j])
            })
            .collect();
        depth += 1;
    }
    depth.max(max_dist.ceil() as usize + 1)
}

/// Discrete centerline: soft skeleton of the binary mask thresholded at 0.5.
pub fn hard_skeleton(mask: &BinaryVolume) -> BinaryVolume {
    let shape = mask.shape();
    let Some((lo, hi)) = mask.support_box(1) else {
        return BinaryVolume::empty(shape);
    };
    // pooling never reaches past one voxel outside the mask, so the cropped
    // computation is exact
    if hi != shape.dims() || lo != [0; 3] {
        return hard_skeleton_full(&mask.crop(lo, hi)).embed(shape, lo);
    }
    hard_skeleton_full(mask)
}

fn hard_skeleton_full(mask: &BinaryVolume) -> BinaryVolume {
    let k = hard_skeleton_iterations(mask);
    let (skel, _) = soft_skeleton_with_tape(&mask.to_field().into_data(), mask.shape(), k)
        .expect("iterations >= 1 and shape consistent");
    Field3::new(mask.shape(), skel).expect("shape preserved").threshold(0.5)
}
