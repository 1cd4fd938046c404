//! Exact anisotropic Euclidean distance transform by separable lower
//! envelopes of parabolas (one pass per axis), with nearest-site tracking.

use crate::volume::{BinaryVolume, Field3, Shape3, VoxelSpacing};

/// One 1D pass over a line of `n` samples.
///
/// `f[i]` is the squared distance carried in from earlier passes (infinite
/// where no site is reachable). Writes `min_q w^2 (p - q)^2 + f[q]` and the
/// feature of the minimizing `q`.
#[allow(clippy::too_many_arguments)]
fn envelope_1d(
    f: &[f64],
    feat_in: &[usize],
    w2: f64,
    out: &mut [f64],
    feat_out: &mut [usize],
    hull: &mut Vec<usize>,
    bounds: &mut Vec<f64>,
) {
    let n = f.len();
    hull.clear();
    bounds.clear();
    let meet = |q: usize, r: usize| -> f64 {
        let (qf, rf) = (q as f64, r as f64);
        ((f[r] + w2 * rf * rf) - (f[q] + w2 * qf * qf)) / (2.0 * w2 * (rf - qf))
    };
    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        if hull.is_empty() {
            hull.push(q);
            bounds.push(f64::NEG_INFINITY);
            continue;
        }
        let mut s = meet(*hull.last().unwrap(), q);
        while s <= *bounds.last().unwrap() {
            hull.pop();
            bounds.pop();
            s = match hull.last() {
                Some(&top) => meet(top, q),
                None => f64::NEG_INFINITY,
            };
            if hull.is_empty() {
                break;
            }
        }
        hull.push(q);
        bounds.push(s);
    }
    if hull.is_empty() {
        out.iter_mut().for_each(|v| *v = f64::INFINITY);
        return;
    }
    let mut k = 0;
    for p in 0..n {
        let pf = p as f64;
        while k + 1 < hull.len() && bounds[k + 1] < pf {
            k += 1;
        }
        let q = hull[k];
        let d = pf - q as f64;
        out[p] = w2 * d * d + f[q];
        feat_out[p] = feat_in[q];
    }
}

/// Squared distance (mm^2) from every voxel to the nearest site, and the
/// linear index of that site. Voxels with no site anywhere get infinity and
/// `usize::MAX`.
pub fn nearest_site_transform(sites: &BinaryVolume, spacing: VoxelSpacing) -> (Vec<f64>, Vec<usize>) {
    let shape = sites.shape();
    let mut dist: Vec<f64> = sites
        .data()
        .iter()
        .map(|&s| if s { 0.0 } else { f64::INFINITY })
        .collect();
    let mut feat: Vec<usize> = (0..shape.len())
        .map(|i| if sites.data()[i] { i } else { usize::MAX })
        .collect();
    let sp = spacing.as_array();
    for axis in 0..3 {
        pass(&mut dist, &mut feat, shape, axis, sp[axis] * sp[axis]);
    }
    (dist, feat)
}

fn pass(dist: &mut [f64], feat: &mut [usize], shape: Shape3, axis: usize, w2: f64) {
    let extent = shape.dims()[axis];
    let stride = shape.stride(axis);
    let mut line = vec![0.0; extent];
    let mut line_feat = vec![0usize; extent];
    let mut out = vec![0.0; extent];
    let mut out_feat = vec![usize::MAX; extent];
    let (mut hull, mut bounds) = (Vec::new(), Vec::new());
    for start in 0..shape.len() {
        if !(start / stride).is_multiple_of(extent) {
            continue;
        }
        for p in 0..extent {
            line[p] = dist[start + p * stride];
            line_feat[p] = feat[start + p * stride];
        }
        out_feat.iter_mut().for_each(|v| *v = usize::MAX);
        envelope_1d(&line, &line_feat, w2, &mut out, &mut out_feat, &mut hull, &mut bounds);
        for p in 0..extent {
            dist[start + p * stride] = out[p];
            feat[start + p * stride] = out_feat[p];
        }
    }
}

/// Squared Euclidean distance (mm^2) from each foreground voxel to the
/// nearest background voxel; zero on background.
pub fn squared_edt(mask: &BinaryVolume, spacing: VoxelSpacing) -> Vec<f64> {
    let background =
        BinaryVolume::new(mask.shape(), mask.data().iter().map(|&b| !b).collect()).expect("shape preserved");
    nearest_site_transform(&background, spacing).0
}

/// Euclidean distance (mm) from each foreground voxel to the nearest
/// background voxel; zero on background. The volume border is not treated
/// as background, so a mask with no background voxel yields infinity.
pub fn edt(mask: &BinaryVolume, spacing: VoxelSpacing) -> Field3 {
    let data = squared_edt(mask, spacing).into_iter().map(f64::sqrt).collect();
    Field3::new(mask.shape(), data).expect("shape preserved")
}
