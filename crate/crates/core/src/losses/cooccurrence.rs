//! Class co-occurrence terms driven by the adjacency prior: a penalty on
//! contact between classes that should never touch, and a connectivity
//! term that matches inter-class junctions inside the keypoint mask.
//!
//! Both work on the foreground channels `1..C`; adjacency index `i` is
//! channel `i + 1`.

use super::{check_pair, LossConfig, LossValue};
use crate::error::{Error, Result};
use crate::morphology::{box_sum_field, sobel_field, SobelResponse};
use crate::scheme::AdjacencyMatrix;
use crate::volume::{BinaryVolume, ProbVolume};

/// Neighborhood occurrence `P_i` of every foreground channel: the 3x3x3
/// window sum, divided by 27 when normalized. Channel `i` of the result is
/// foreground class `i + 1`.
pub fn local_occurrence(pred: &ProbVolume, normalize: bool) -> Result<ProbVolume> {
    if pred.channels() < 2 {
        return Err(Error::InvalidParameter("no foreground channels".into()));
    }
    let scale = if normalize { 1.0 / 27.0 } else { 1.0 };
    let shape = pred.shape();
    let mut data = Vec::with_capacity((pred.channels() - 1) * shape.len());
    for c in 1..pred.channels() {
        data.extend(box_sum_field(pred.channel(c), shape).into_iter().map(|v| v * scale));
    }
    ProbVolume::new(pred.channels() - 1, shape, data)
}

fn check_adjacency(pred: &ProbVolume, adjacency: &AdjacencyMatrix) -> Result<()> {
    if adjacency.len() + 1 != pred.channels() {
        return Err(Error::shape(
            format!("{} foreground classes", pred.channels() - 1),
            format!("{}x{} adjacency", adjacency.len(), adjacency.len()),
        ));
    }
    Ok(())
}

/// Pulls per-class gradients on `P` back to prediction channels `1..C`.
fn occurrence_backward(grad_occ: &[Vec<f64>], scale: f64, grad: &mut ProbVolume) {
    let shape = grad.shape();
    for (i, g) in grad_occ.iter().enumerate() {
        for (o, b) in grad.channel_mut(i + 1).iter_mut().zip(box_sum_field(g, shape)) {
            *o += scale * b;
        }
    }
}

/// `(1/|Ã|) Σ_{i≠j} Ã_ij Σ_v P_i P_j` over ordered pairs of non-adjacent
/// classes; 0 when every pair is adjacent.
pub fn cooccurrence_fp_loss(pred: &ProbVolume, adjacency: &AdjacencyMatrix, cfg: &LossConfig) -> Result<LossValue> {
    check_adjacency(pred, adjacency)?;
    let mut grad = ProbVolume::zeros(pred.channels(), pred.shape());
    let norm = adjacency.complement_count();
    if norm == 0 {
        return Ok(LossValue { value: 0.0, grad });
    }
    let occ = local_occurrence(pred, cfg.occurrence_normalization)?;
    let k = adjacency.len();
    let n = pred.shape().len();
    let mut value = 0.0;
    let mut grad_occ = Vec::with_capacity(k);
    for i in 0..k {
        let pi = occ.channel(i);
        // summed directly (not as a complement) so disjoint supports give exactly 0
        let mut partner = vec![0.0; n];
        for j in (0..k).filter(|&j| j != i && !adjacency.get(i, j)) {
            for (a, b) in partner.iter_mut().zip(occ.channel(j)) {
                *a += b;
            }
        }
        value += pi.iter().zip(&partner).map(|(a, b)| a * b).sum::<f64>();
        grad_occ.push(partner.iter().map(|b| 2.0 * b / norm as f64).collect());
    }
    occurrence_backward(&grad_occ, cfg.occurrence_scale(), &mut grad);
    Ok(LossValue {
        value: value / norm as f64,
        grad,
    })
}

struct JunctionTerms {
    occ: ProbVolume,
    edges: Vec<SobelResponse>,
}

fn junction_terms(vol: &ProbVolume, normalize: bool) -> Result<JunctionTerms> {
    let shape = vol.shape();
    let edges = (1..vol.channels())
        .map(|c| sobel_field(vol.channel(c), shape))
        .collect();
    Ok(JunctionTerms {
        occ: local_occurrence(vol, normalize)?,
        edges,
    })
}

/// `Σ_{A_ij = 1} Σ_{v ∈ mask} (q_ij^pred - q_ij^gt)^2` with
/// `q_ij = P_i P_j Edge_i`, summed over ordered pairs and divided by
/// `max(1, |mask|)` when `cfg.fn_mask_normalization` is set.
pub fn cooccurrence_fn_loss(
    pred: &ProbVolume,
    gt: &ProbVolume,
    adjacency: &AdjacencyMatrix,
    mask: &BinaryVolume,
    cfg: &LossConfig,
) -> Result<LossValue> {
    check_pair(pred, gt)?;
    check_adjacency(pred, adjacency)?;
    if mask.shape() != pred.shape() {
        return Err(Error::shape(pred.shape().dims(), mask.shape().dims()));
    }
    let shape = pred.shape();
    let mut grad = ProbVolume::zeros(pred.channels(), shape);
    let voxels: Vec<usize> = (0..shape.len()).filter(|&v| mask.data()[v]).collect();
    if voxels.is_empty() {
        return Ok(LossValue { value: 0.0, grad });
    }
    let norm = if cfg.fn_mask_normalization {
        voxels.len() as f64
    } else {
        1.0
    };
    let p = junction_terms(pred, cfg.occurrence_normalization)?;
    let g = junction_terms(gt, cfg.occurrence_normalization)?;
    let k = adjacency.len();
    let n = shape.len();
    let mut grad_occ = vec![vec![0.0; n]; k];
    let mut grad_edge = vec![vec![0.0; n]; k];
    let mut value = 0.0;
    for i in 0..k {
        let (pp_i, pg_i) = (p.occ.channel(i), g.occ.channel(i));
        let (ep_i, eg_i) = (&p.edges[i].magnitude, &g.edges[i].magnitude);
        for j in adjacency.neighbors(i) {
            let (pp_j, pg_j) = (p.occ.channel(j), g.occ.channel(j));
            for &v in &voxels {
                let r = pp_i[v] * pp_j[v] * ep_i[v] - pg_i[v] * pg_j[v] * eg_i[v];
                value += r * r;
                let dr = 2.0 * r / norm;
                grad_occ[i][v] += dr * pp_j[v] * ep_i[v];
                grad_occ[j][v] += dr * pp_i[v] * ep_i[v];
                grad_edge[i][v] += dr * pp_i[v] * pp_j[v];
            }
        }
    }
    occurrence_backward(&grad_occ, cfg.occurrence_scale(), &mut grad);
    for i in 0..k {
        let back = p.edges[i].backward(&grad_edge[i], shape);
        for (o, b) in grad.channel_mut(i + 1).iter_mut().zip(back) {
            *o += b;
        }
    }
    Ok(LossValue {
        value: value / norm,
        grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::morphology::keypoint_mask;
    use crate::volume::{one_hot, LabelVolume, Shape3, VoxelSpacing};

    fn two_blocks(gap: usize) -> LabelVolume {
        let s = Shape3::new(8 + gap, 4, 4).unwrap();
        let mut l = LabelVolume::zeros(s, VoxelSpacing::default());
        for z in 1..3 {
            for y in 1..3 {
                for x in 1..4 {
                    l.set(x, y, z, 1);
                    l.set(x + 3 + gap, y, z, 2);
                }
            }
        }
        l
    }

    #[test]
    fn occurrence_of_isolated_voxel() {
        let s = Shape3::cube(5);
        let mut l = LabelVolume::zeros(s, VoxelSpacing::default());
        l.set(2, 2, 2, 1);
        let occ = local_occurrence(&one_hot(&l, 2).unwrap(), true).unwrap();
        assert_eq!(occ.channels(), 1);
        assert!((occ.get(0, s.index(2, 2, 2)) - 1.0 / 27.0).abs() < 1e-15);
        assert!((occ.get(0, s.index(1, 1, 1)) - 1.0 / 27.0).abs() < 1e-15);
        assert_eq!(occ.get(0, s.index(0, 0, 0)), 0.0);
    }

    #[test]
    fn separated_non_adjacent_classes_cost_nothing() {
        let cfg = LossConfig::default();
        let a = AdjacencyMatrix::empty(2);
        let far = one_hot(&two_blocks(2), 3).unwrap();
        assert_eq!(cooccurrence_fp_loss(&far, &a, &cfg).unwrap().value, 0.0);
        let touching = one_hot(&two_blocks(0), 3).unwrap();
        assert!(cooccurrence_fp_loss(&touching, &a, &cfg).unwrap().value > 0.0);
        let adjacent = AdjacencyMatrix::from_index_pairs(2, &[(0, 1)]).unwrap();
        assert_eq!(cooccurrence_fp_loss(&touching, &adjacent, &cfg).unwrap().value, 0.0);
    }

    #[test]
    fn fn_term_sees_deleted_junction() {
        let cfg = LossConfig::default();
        let a = AdjacencyMatrix::from_index_pairs(2, &[(0, 1)]).unwrap();
        let joined = two_blocks(0);
        let gt = one_hot(&joined, 3).unwrap();
        let mask = keypoint_mask(&joined, &a, 1);
        assert!(!mask.is_empty());
        assert_eq!(cooccurrence_fn_loss(&gt, &gt, &a, &mask, &cfg).unwrap().value, 0.0);
        let mut split = joined.clone();
        for z in 0..4 {
            for y in 0..4 {
                split.set(3, y, z, 0);
                split.set(4, y, z, 0);
            }
        }
        let pred = one_hot(&split, 3).unwrap();
        assert!(cooccurrence_fn_loss(&pred, &gt, &a, &mask, &cfg).unwrap().value > 0.0);
        let empty = BinaryVolume::empty(gt.shape());
        assert_eq!(cooccurrence_fn_loss(&pred, &gt, &a, &empty, &cfg).unwrap().value, 0.0);
    }
}
