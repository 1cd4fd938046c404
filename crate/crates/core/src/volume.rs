//! Dense 3D volume containers.
//!
//! All volumes share one memory layout: the first axis varies fastest, so the
//! voxel `(x, y, z)` of a `(nx, ny, nz)` grid lives at `x + nx * (y + ny * z)`.
//! This is the NIfTI on-disk order, which lets the I/O layer copy payloads
//! without transposing. Multichannel volumes store channels as consecutive
//! blocks of one spatial volume each.

use crate::error::{Error, Result};

/// Spatial extent of a volume in voxels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Shape3 {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl Shape3 {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Result<Self> {
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(Error::InvalidParameter(format!(
                "volume dimensions must be >= 1, got ({nx}, {ny}, {nz})"
            )));
        }
        Ok(Self { nx, ny, nz })
    }

    /// Cube of side `n`. Panics if `n == 0`.
    pub fn cube(n: usize) -> Self {
        Self::new(n, n, n).expect("cube side must be positive")
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.nx * (y + self.ny * z)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let x = idx % self.nx;
        let rest = idx / self.nx;
        [x, rest % self.ny, rest / self.ny]
    }

    /// Linear index of `(x+dx, y+dy, z+dz)` if it falls inside the grid.
    #[inline]
    pub fn offset(&self, c: [usize; 3], d: [isize; 3]) -> Option<usize> {
        let x = c[0] as isize + d[0];
        let y = c[1] as isize + d[1];
        let z = c[2] as isize + d[2];
        if x < 0 || y < 0 || z < 0 || x >= self.nx as isize || y >= self.ny as isize || z >= self.nz as isize {
            return None;
        }
        Some(self.index(x as usize, y as usize, z as usize))
    }

    /// Whether `c` lies on the outermost layer of the grid.
    pub fn on_border(&self, c: [usize; 3]) -> bool {
        c[0] == 0 || c[1] == 0 || c[2] == 0 || c[0] + 1 == self.nx || c[1] + 1 == self.ny || c[2] + 1 == self.nz
    }

    /// Stride of axis `axis` in the linear layout.
    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        match axis {
            0 => 1,
            1 => self.nx,
            _ => self.nx * self.ny,
        }
    }
}

/// The 26 neighbor offsets of the 3x3x3 window, center excluded.
pub const NEIGHBORS_26: [[isize; 3]; 26] = {
    let mut out = [[0isize; 3]; 26];
    let mut n = 0;
    let mut dz = -1;
    while dz <= 1 {
        let mut dy = -1;
        while dy <= 1 {
            let mut dx = -1;
            while dx <= 1 {
                if !(dx == 0 && dy == 0 && dz == 0) {
                    out[n] = [dx, dy, dz];
                    n += 1;
                }
                dx += 1;
            }
            dy += 1;
        }
        dz += 1;
    }
    out
};

/// The 6 face neighbors.
pub const NEIGHBORS_6: [[isize; 3]; 6] = [[-1, 0, 0], [1, 0, 0], [0, -1, 0], [0, 1, 0], [0, 0, -1], [0, 0, 1]];

/// Physical voxel size in millimeters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct VoxelSpacing {
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
}

impl VoxelSpacing {
    pub fn new(dx: f64, dy: f64, dz: f64) -> Result<Self> {
        for v in [dx, dy, dz] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "voxel spacing must be finite and positive, got ({dx}, {dy}, {dz})"
                )));
            }
        }
        Ok(Self { dx, dy, dz })
    }

    pub fn isotropic(d: f64) -> Result<Self> {
        Self::new(d, d, d)
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.dx, self.dy, self.dz]
    }

    pub fn min(&self) -> f64 {
        self.dx.min(self.dy).min(self.dz)
    }

    pub fn scaled(&self, k: f64) -> Result<Self> {
        Self::new(self.dx * k, self.dy * k, self.dz * k)
    }
}

impl Default for VoxelSpacing {
    fn default() -> Self {
        Self {
            dx: 1.0,
            dy: 1.0,
            dz: 1.0,
        }
    }
}

/// Integer ground-truth (or argmax prediction) label field.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVolume {
    shape: Shape3,
    spacing: VoxelSpacing,
    data: Vec<u16>,
}

impl LabelVolume {
    pub fn new(shape: Shape3, spacing: VoxelSpacing, data: Vec<u16>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::shape(shape.len(), data.len()));
        }
        Ok(Self { shape, spacing, data })
    }

    pub fn zeros(shape: Shape3, spacing: VoxelSpacing) -> Self {
        Self {
            shape,
            spacing,
            data: vec![0; shape.len()],
        }
    }

    pub fn shape(&self) -> Shape3 {
        self.shape
    }

    pub fn spacing(&self) -> VoxelSpacing {
        self.spacing
    }

    pub fn with_spacing(mut self, spacing: VoxelSpacing) -> Self {
        self.spacing = spacing;
        self
    }

    pub fn data(&self) -> &[u16] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u16] {
        &mut self.data
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> u16 {
        self.data[self.shape.index(x, y, z)]
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, v: u16) {
        let i = self.shape.index(x, y, z);
        self.data[i] = v;
    }

    pub fn max_label(&self) -> u16 {
        self.data.iter().copied().max().unwrap_or(0)
    }

    /// Checks every label against the class count.
    pub fn validate(&self, num_classes: usize) -> Result<()> {
        match self.data.iter().position(|&v| v as usize >= num_classes) {
            Some(index) => Err(Error::InvalidLabel {
                value: self.data[index] as u32,
                index,
                num_classes,
            }),
            None => Ok(()),
        }
    }

    /// Binary mask of voxels equal to `class_id`.
    pub fn class_mask(&self, class_id: u16) -> BinaryVolume {
        BinaryVolume {
            shape: self.shape,
            data: self.data.iter().map(|&v| v == class_id).collect(),
        }
    }

    /// Binary mask of all nonzero labels.
    pub fn foreground(&self) -> BinaryVolume {
        BinaryVolume {
            shape: self.shape,
            data: self.data.iter().map(|&v| v != 0).collect(),
        }
    }

    pub fn count(&self, class_id: u16) -> usize {
        self.data.iter().filter(|&&v| v == class_id).count()
    }
}

/// Per-voxel multichannel field; channel `c` occupies
/// `data[c * n .. (c + 1) * n]` where `n` is the voxel count.
///
/// Used for class probabilities, one-hot targets, and any other
/// channel-shaped intermediate (error maps, edge maps, gradients).
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVolume {
    channels: usize,
    shape: Shape3,
    data: Vec<f64>,
}

impl ProbVolume {
    pub fn new(channels: usize, shape: Shape3, data: Vec<f64>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::InvalidParameter("channel count must be >= 1".into()));
        }
        if data.len() != channels * shape.len() {
            return Err(Error::shape(channels * shape.len(), data.len()));
        }
        Ok(Self { channels, shape, data })
    }

    pub fn zeros(channels: usize, shape: Shape3) -> Self {
        Self {
            channels,
            shape,
            data: vec![0.0; channels * shape.len()],
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> Shape3 {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.shape.len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.shape.len();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, voxel: usize) -> f64 {
        self.data[c * self.shape.len() + voxel]
    }

    pub fn same_layout(&self, other: &ProbVolume) -> Result<()> {
        if self.channels != other.channels || self.shape != other.shape {
            return Err(Error::shape(
                (self.channels, self.shape.dims()),
                (other.channels, other.shape.dims()),
            ));
        }
        Ok(())
    }

    /// True when every value lies in `[0, 1]` and every voxel's channel sum
    /// is within `tol` of one.
    pub fn is_simplex(&self, tol: f64) -> bool {
        if self.data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return false;
        }
        let n = self.shape.len();
        (0..n).all(|v| {
            let s: f64 = (0..self.channels).map(|c| self.data[c * n + v]).sum();
            (s - 1.0).abs() <= tol
        })
    }

    pub fn validate_simplex(&self) -> Result<()> {
        if self.is_simplex(1e-5) {
            Ok(())
        } else {
            Err(Error::InvalidParameter(
                "probability volume is not a per-voxel simplex".into(),
            ))
        }
    }

    /// Voxel-wise argmax; ties resolve to the lowest channel.
    pub fn argmax(&self, spacing: VoxelSpacing) -> LabelVolume {
        let n = self.shape.len();
        let data = (0..n)
            .map(|v| {
                let mut best = 0;
                let mut best_val = self.data[v];
                for c in 1..self.channels {
                    let val = self.data[c * n + v];
                    if val > best_val {
                        best = c;
                        best_val = val;
                    }
                }
                best as u16
            })
            .collect();
        LabelVolume {
            shape: self.shape,
            spacing,
            data,
        }
    }

    /// `self += k * other`.
    pub fn add_scaled(&mut self, k: f64, other: &ProbVolume) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += k * b;
        }
    }

    pub fn max_abs_diff(&self, other: &ProbVolume) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Expands labels into a one-hot probability volume with `num_classes` channels.
pub fn one_hot(labels: &LabelVolume, num_classes: usize) -> Result<ProbVolume> {
    labels.validate(num_classes)?;
    let n = labels.shape.len();
    let mut out = ProbVolume::zeros(num_classes, labels.shape);
    for (v, &l) in labels.data.iter().enumerate() {
        out.data[l as usize * n + v] = 1.0;
    }
    Ok(out)
}

/// One-hot encoding softened to `hi` on the labeled channel and
/// `(1 - hi) / (C - 1)` elsewhere.
pub fn relaxed_one_hot(labels: &LabelVolume, num_classes: usize, hi: f64) -> Result<ProbVolume> {
    if num_classes < 2 || !(0.0..=1.0).contains(&hi) {
        return Err(Error::InvalidParameter(format!(
            "relaxed one-hot needs >= 2 classes and hi in [0,1], got {num_classes}, {hi}"
        )));
    }
    labels.validate(num_classes)?;
    let n = labels.shape.len();
    let lo = (1.0 - hi) / (num_classes - 1) as f64;
    let mut out = ProbVolume::new(num_classes, labels.shape, vec![lo; num_classes * n])?;
    for (v, &l) in labels.data.iter().enumerate() {
        out.data[l as usize * n + v] = hi;
    }
    Ok(out)
}

/// Boolean mask over a grid.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryVolume {
    shape: Shape3,
    data: Vec<bool>,
}

impl BinaryVolume {
    pub fn new(shape: Shape3, data: Vec<bool>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::shape(shape.len(), data.len()));
        }
        Ok(Self { shape, data })
    }

    pub fn empty(shape: Shape3) -> Self {
        Self {
            shape,
            data: vec![false; shape.len()],
        }
    }

    pub fn from_fn(shape: Shape3, mut f: impl FnMut(usize, usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(shape.len());
        for z in 0..shape.nz {
            for y in 0..shape.ny {
                for x in 0..shape.nx {
                    data.push(f(x, y, z));
                }
            }
        }
        Self { shape, data }
    }

    pub fn shape(&self) -> Shape3 {
        self.shape
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [bool] {
        &mut self.data
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.data[self.shape.index(x, y, z)]
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, v: bool) {
        let i = self.shape.index(x, y, z);
        self.data[i] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    pub fn is_full(&self) -> bool {
        self.data.iter().all(|&b| b)
    }

    pub fn intersection_count(&self, other: &BinaryVolume) -> usize {
        self.data.iter().zip(&other.data).filter(|(&a, &b)| a && b).count()
    }

    pub fn is_subset_of(&self, other: &BinaryVolume) -> bool {
        self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }

    pub fn to_field(&self) -> Field3 {
        Field3 {
            shape: self.shape,
            data: self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }

    pub fn check_same_shape(&self, other: &BinaryVolume) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(self.shape.dims(), other.shape.dims()));
        }
        Ok(())
    }

    /// Bounding box `[min, max)` of the set voxels grown by `margin` and
    /// clamped to the grid; `None` for an empty mask.
    pub fn support_box(&self, margin: usize) -> Option<([usize; 3], [usize; 3])> {
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        for (i, _) in self.data.iter().enumerate().filter(|(_, &b)| b) {
            let c = self.shape.coords(i);
            for k in 0..3 {
                lo[k] = lo[k].min(c[k]);
                hi[k] = hi[k].max(c[k] + 1);
            }
        }
        if lo[0] == usize::MAX {
            return None;
        }
        let dims = self.shape.dims();
        Some((
            std::array::from_fn(|k| lo[k].saturating_sub(margin)),
            std::array::from_fn(|k| (hi[k] + margin).min(dims[k])),
        ))
    }

    /// The sub-grid `[min, max)`.
    pub fn crop(&self, min: [usize; 3], max: [usize; 3]) -> BinaryVolume {
        let shape = Shape3::new(max[0] - min[0], max[1] - min[1], max[2] - min[2]).expect("non-empty box");
        BinaryVolume::from_fn(shape, |x, y, z| self.get(x + min[0], y + min[1], z + min[2]))
    }

    /// Places `self` at offset `min` inside an otherwise empty `shape` grid.
    pub fn embed(&self, shape: Shape3, min: [usize; 3]) -> BinaryVolume {
        let mut out = BinaryVolume::empty(shape);
        for (i, _) in self.data.iter().enumerate().filter(|(_, &b)| b) {
            let [x, y, z] = self.shape.coords(i);
            out.set(x + min[0], y + min[1], z + min[2], true);
        }
        out
    }
}

/// Single-channel real-valued field (distance maps, skeletons, weights).
#[derive(Debug, Clone, PartialEq)]
pub struct Field3 {
    shape: Shape3,
    data: Vec<f64>,
}

impl Field3 {
    pub fn new(shape: Shape3, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::shape(shape.len(), data.len()));
        }
        Ok(Self { shape, data })
    }

    pub fn filled(shape: Shape3, value: f64) -> Self {
        Self {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub fn shape(&self) -> Shape3 {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[self.shape.index(x, y, z)]
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Voxels strictly above `threshold`.
    pub fn threshold(&self, threshold: f64) -> BinaryVolume {
        BinaryVolume {
            shape: self.shape,
            data: self.data.iter().map(|&v| v > threshold).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn index_roundtrip() {
        let s = Shape3::new(3, 4, 5).unwrap();
        for i in 0..s.len() {
            let [x, y, z] = s.coords(i);
            assert_eq!(s.index(x, y, z), i);
        }
        assert_eq!(s.stride(2), 12);
    }

    #[test]
    fn rejects_zero_dims_and_bad_spacing() {
        assert!(Shape3::new(0, 1, 1).is_err());
        assert!(VoxelSpacing::new(1.0, 0.0, 1.0).is_err());
        assert!(VoxelSpacing::new(1.0, f64::NAN, 1.0).is_err());
    }

    #[test]
    fn one_hot_single_voxel() {
        let l = LabelVolume::new(Shape3::cube(1), VoxelSpacing::default(), vec![3]).unwrap();
        let oh = one_hot(&l, 4).unwrap();
        assert_eq!(oh.data(), &[0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn one_hot_background_only() {
        let l = LabelVolume::zeros(Shape3::cube(3), VoxelSpacing::default());
        let oh = one_hot(&l, 5).unwrap();
        assert!(oh.channel(0).iter().all(|&v| v == 1.0));
        for c in 1..5 {
            assert!(oh.channel(c).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn one_hot_rejects_out_of_range() {
        let l = LabelVolume::new(Shape3::cube(1), VoxelSpacing::default(), vec![4]).unwrap();
        assert!(matches!(one_hot(&l, 4), Err(Error::InvalidLabel { value: 4, .. })));
    }

    #[test]
    fn one_hot_argmax_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = Shape3::cube(8);
        let data = (0..s.len()).map(|_| rng.random_range(0..21u16)).collect();
        let l = LabelVolume::new(s, VoxelSpacing::default(), data).unwrap();
        let oh = one_hot(&l, 21).unwrap();
        assert!(oh.is_simplex(0.0));
        assert_eq!(oh.argmax(VoxelSpacing::default()), l);
    }

    #[test]
    fn neighbor_tables() {
        assert_eq!(NEIGHBORS_26.len(), 26);
        assert!(!NEIGHBORS_26.contains(&[0, 0, 0]));
    }
}
