//! Local 3x3x3 operators: box sums, Sobel edges, binary dilation and
//! keypoint masks. Every convolution uses zero padding at the volume border.

mod edt;
mod skeleton;

pub use edt::{edt, nearest_site_transform, squared_edt};
pub use skeleton::{
    hard_skeleton, hard_skeleton_iterations, soft_skeleton, soft_skeleton_with_tape, SkeletonTape,
    DEFAULT_SKELETON_ITERATIONS,
};

use rayon::prelude::*;

use crate::error::Result;
use crate::scheme::AdjacencyMatrix;
use crate::volume::{BinaryVolume, LabelVolume, ProbVolume, Shape3, NEIGHBORS_26};

/// Per-channel `|box(pred) - box(gt)|`.
pub type NeighborhoodErrorMap = ProbVolume;
/// Per-channel Sobel gradient magnitude.
pub type EdgeMap = ProbVolume;

const BOX: [f64; 3] = [1.0, 1.0, 1.0];
const SOBEL_DERIV: [f64; 3] = [-1.0, 0.0, 1.0];
const SOBEL_SMOOTH: [f64; 3] = [1.0, 2.0, 1.0];

/// Correlates one axis with a 3-tap stencil:
/// `out[i] = w[0]*in[i-1] + w[1]*in[i] + w[2]*in[i+1]`, zero outside the grid.
fn axis_stencil(input: &[f64], shape: Shape3, axis: usize, w: [f64; 3]) -> Vec<f64> {
    let stride = shape.stride(axis);
    let extent = shape.dims()[axis];
    let mut out = vec![0.0; input.len()];
    for (i, o) in out.iter_mut().enumerate() {
        let pos = (i / stride) % extent;
        let mut acc = w[1] * input[i];
        if pos > 0 {
            acc += w[0] * input[i - stride];
        }
        if pos + 1 < extent {
            acc += w[2] * input[i + stride];
        }
        *o = acc;
    }
    out
}

fn separable(input: &[f64], shape: Shape3, taps: [[f64; 3]; 3]) -> Vec<f64> {
    let a = axis_stencil(input, shape, 0, taps[0]);
    let b = axis_stencil(&a, shape, 1, taps[1]);
    axis_stencil(&b, shape, 2, taps[2])
}

fn flipped(w: [f64; 3]) -> [f64; 3] {
    [w[2], w[1], w[0]]
}

/// 3x3x3 all-ones window sum of a single channel.
pub fn box_sum_field(input: &[f64], shape: Shape3) -> Vec<f64> {
    separable(input, shape, [BOX; 3])
}

/// Applies the all-ones 3x3x3 kernel to every channel. The kernel is
/// symmetric, so this operator is also its own adjoint.
pub fn box_sum_3(vol: &ProbVolume) -> ProbVolume {
    map_channels(vol, box_sum_field)
}

fn map_channels(vol: &ProbVolume, f: impl Fn(&[f64], Shape3) -> Vec<f64> + Sync) -> ProbVolume {
    let shape = vol.shape();
    let parts: Vec<Vec<f64>> = (0..vol.channels())
        .into_par_iter()
        .map(|c| f(vol.channel(c), shape))
        .collect();
    ProbVolume::new(vol.channels(), shape, parts.concat()).expect("channel layout preserved")
}

/// `E_N = |box(pred) - box(gt)|` per channel.
pub fn neighborhood_error(pred: &ProbVolume, gt: &ProbVolume) -> Result<NeighborhoodErrorMap> {
    pred.same_layout(gt)?;
    let bp = box_sum_3(pred);
    let bg = box_sum_3(gt);
    let data = bp.data().iter().zip(bg.data()).map(|(a, b)| (a - b).abs()).collect();
    ProbVolume::new(pred.channels(), pred.shape(), data)
}

fn sobel_taps(axis: usize) -> [[f64; 3]; 3] {
    let mut taps = [SOBEL_SMOOTH; 3];
    taps[axis] = SOBEL_DERIV;
    taps
}

/// Directional Sobel response of one channel along `axis`.
pub fn sobel_axis(input: &[f64], shape: Shape3, axis: usize) -> Vec<f64> {
    separable(input, shape, sobel_taps(axis))
}

/// Adjoint of [`sobel_axis`]: correlation with the flipped kernel.
pub fn sobel_axis_adjoint(input: &[f64], shape: Shape3, axis: usize) -> Vec<f64> {
    let t = sobel_taps(axis);
    separable(input, shape, [flipped(t[0]), flipped(t[1]), flipped(t[2])])
}

/// Sobel directional responses and gradient magnitude of one channel.
#[derive(Debug, Clone)]
pub struct SobelResponse {
    pub directional: [Vec<f64>; 3],
    pub magnitude: Vec<f64>,
}

pub fn sobel_field(input: &[f64], shape: Shape3) -> SobelResponse {
    let directional = [
        sobel_axis(input, shape, 0),
        sobel_axis(input, shape, 1),
        sobel_axis(input, shape, 2),
    ];
    let magnitude = (0..input.len())
        .map(|i| (directional[0][i].powi(2) + directional[1][i].powi(2) + directional[2][i].powi(2)).sqrt())
        .collect();
    SobelResponse { directional, magnitude }
}

impl SobelResponse {
    /// Pulls a gradient on the magnitude back to the input channel.
    /// Voxels with zero magnitude contribute nothing (subgradient 0).
    pub fn backward(&self, grad_magnitude: &[f64], shape: Shape3) -> Vec<f64> {
        let mut out = vec![0.0; grad_magnitude.len()];
        for axis in 0..3 {
            let g: Vec<f64> = grad_magnitude
                .iter()
                .enumerate()
                .map(|(i, &gm)| {
                    let m = self.magnitude[i];
                    if m > 0.0 {
                        gm * self.directional[axis][i] / m
                    } else {
                        0.0
                    }
                })
                .collect();
            for (o, v) in out.iter_mut().zip(sobel_axis_adjoint(&g, shape, axis)) {
                *o += v;
            }
        }
        out
    }
}

/// Per-channel Sobel gradient magnitude with raw integer stencils.
pub fn sobel_edges(vol: &ProbVolume) -> EdgeMap {
    map_channels(vol, |ch, shape| sobel_field(ch, shape).magnitude)
}

/// Binary dilation with the 3x3x3 cube, applied `times` times.
pub fn dilate(mask: &BinaryVolume, times: usize) -> BinaryVolume {
    let shape = mask.shape();
    let mut cur = mask.data().to_vec();
    for _ in 0..times {
        for axis in 0..3 {
            let stride = shape.stride(axis);
            let extent = shape.dims()[axis];
            let prev = cur.clone();
            for (i, c) in cur.iter_mut().enumerate() {
                if *c {
                    continue;
                }
                let pos = (i / stride) % extent;
                *c = (pos > 0 && prev[i - stride]) || (pos + 1 < extent && prev[i + stride]);
            }
        }
    }
    BinaryVolume::new(shape, cur).expect("shape preserved")
}

pub const DEFAULT_KEYPOINT_DILATION: usize = 1;

/// Foreground voxels with a 26-neighbor of a different, adjacent class,
/// dilated `dilation` times.
pub fn keypoint_mask(gt: &LabelVolume, adjacency: &AdjacencyMatrix, dilation: usize) -> BinaryVolume {
    let shape = gt.shape();
    let labels = gt.data();
    let seeds: Vec<bool> = (0..shape.len())
        .into_par_iter()
        .map(|i| {
            let a = labels[i];
            if a == 0 {
                return false;
            }
            let c = shape.coords(i);
            NEIGHBORS_26.iter().any(|&d| {
                shape
                    .offset(c, d)
                    .is_some_and(|j| adjacency.classes_adjacent(a, labels[j]))
            })
        })
        .collect();
    dilate(&BinaryVolume::new(shape, seeds).expect("shape preserved"), dilation)
}
