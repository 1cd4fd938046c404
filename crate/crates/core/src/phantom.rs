//! Synthetic vascular phantoms with known geometry and topology, plus
//! perturbations (breaks, label swaps, boundary jitter) used as oracles for
//! the losses and metrics.
//!
//! Tubes are swept balls: a voxel belongs to a segment when its center lies
//! within `radius` voxels (Euclidean) of the segment.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morphology::hard_skeleton;
use crate::scheme::{default_cow_adjacency, ClassScheme};
use crate::topology::{connected_components, Connectivity};
use crate::volume::{Field3, LabelVolume, Shape3, VoxelSpacing, NEIGHBORS_26, NEIGHBORS_6};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhantomKind {
    Tube,
    Torus,
    Shell,
    ToyCow,
}

impl std::str::FromStr for PhantomKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tube" => Ok(PhantomKind::Tube),
            "torus" => Ok(PhantomKind::Torus),
            "shell" => Ok(PhantomKind::Shell),
            "toy_cow" | "toy-cow" => Ok(PhantomKind::ToyCow),
            _ => Err(Error::InvalidParameter(format!("unknown phantom kind `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub kind: PhantomKind,
    /// Grid size; `None` picks a size that fits the structure with margin.
    pub shape: Option<Shape3>,
    pub spacing: VoxelSpacing,
    pub radius_voxels: usize,
    /// Drives the optional lateral wobble of tube waypoints.
    pub rng_seed: u64,
    /// Label written for single-structure kinds.
    pub class_id: u16,
    /// Tube centerline; `None` runs straight along z through the grid center.
    pub waypoints: Option<Vec<[f64; 3]>>,
    /// Class names removed from a toy Circle of Willis.
    pub absent: Vec<String>,
}

impl PhantomSpec {
    pub fn new(kind: PhantomKind, radius_voxels: usize) -> Self {
        Self {
            kind,
            shape: None,
            spacing: VoxelSpacing::default(),
            radius_voxels,
            rng_seed: 0,
            class_id: 1,
            waypoints: None,
            absent: Vec::new(),
        }
    }

    pub fn with_shape(mut self, shape: Shape3) -> Self {
        self.shape = Some(shape);
        self
    }

    pub fn with_spacing(mut self, spacing: VoxelSpacing) -> Self {
        self.spacing = spacing;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn with_class(mut self, class_id: u16) -> Self {
        self.class_id = class_id;
        self
    }

    pub fn with_waypoints(mut self, waypoints: Vec<[f64; 3]>) -> Self {
        self.waypoints = Some(waypoints);
        self
    }

    /// Applies a variant flag such as `no-pcom-left` or `no-acom`.
    pub fn with_variant(mut self, variant: &str, scheme: &ClassScheme) -> Result<Self> {
        self.absent.push(variant_class(variant, scheme)?);
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        if self.radius_voxels < 1 {
            return Err(Error::InvalidParameter("phantom radius must be >= 1 voxel".into()));
        }
        Ok(())
    }
}

/// Maps `no-<artery>[-left|-right]` to a scheme class name.
pub fn variant_class(variant: &str, scheme: &ClassScheme) -> Result<String> {
    let body = variant
        .strip_prefix("no-")
        .ok_or_else(|| Error::InvalidParameter(format!("variant `{variant}` must start with `no-`")))?;
    let (artery, prefix) = if let Some(a) = body.strip_suffix("-left") {
        (a, "L-")
    } else if let Some(a) = body.strip_suffix("-right") {
        (a, "R-")
    } else {
        (body, "")
    };
    let wanted = format!("{prefix}{artery}").to_ascii_lowercase();
    scheme
        .classes()
        .iter()
        .find(|c| c.name.to_ascii_lowercase() == wanted)
        .map(|c| c.name.clone())
        .ok_or_else(|| Error::UnknownClass(format!("{prefix}{artery}")))
}

fn segment_distance2(p: [f64; 3], a: [f64; 3], b: [f64; 3]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let ap = [p[0] - a[0], p[1] - a[1], p[2] - a[2]];
    let len2 = ab.iter().map(|v| v * v).sum::<f64>();
    let t = if len2 > 0.0 {
        (ap.iter().zip(&ab).map(|(u, v)| u * v).sum::<f64>() / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (0..3).map(|k| (ap[k] - t * ab[k]).powi(2)).sum()
}

/// Paints a capsule of `radius` around segment `a`-`b`; `label_at` decides
/// the label of each covered voxel (returning `None` leaves it untouched).
fn paint_segment(
    vol: &mut LabelVolume,
    a: [f64; 3],
    b: [f64; 3],
    radius: f64,
    mut label_at: impl FnMut([usize; 3]) -> Option<u16>,
) {
    let shape = vol.shape();
    let dims = shape.dims();
    let r2 = radius * radius + 1e-9;
    let mut lo = [0usize; 3];
    let mut hi = [0usize; 3];
    for k in 0..3 {
        let mn = a[k].min(b[k]) - radius - 1.0;
        let mx = a[k].max(b[k]) + radius + 1.0;
        lo[k] = mn.floor().max(0.0) as usize;
        hi[k] = (mx.ceil().max(0.0) as usize).min(dims[k] - 1);
    }
    for z in lo[2]..=hi[2] {
        for y in lo[1]..=hi[1] {
            for x in lo[0]..=hi[0] {
                let p = [x as f64, y as f64, z as f64];
                if segment_distance2(p, a, b) <= r2 {
                    if let Some(l) = label_at([x, y, z]) {
                        vol.set(x, y, z, l);
                    }
                }
            }
        }
    }
}

fn check_fits(shape: Shape3, points: &[[f64; 3]], radius: f64) -> Result<()> {
    let dims = shape.dims();
    for p in points {
        for k in 0..3 {
            if p[k] - radius < 0.0 || p[k] + radius > (dims[k] - 1) as f64 {
                return Err(Error::InvalidParameter(format!(
                    "structure of radius {radius} at {p:?} does not fit in {dims:?}"
                )));
            }
        }
    }
    Ok(())
}

/// Straight or polyline tube; a single component with no tunnels.
pub fn make_tube(spec: &PhantomSpec) -> Result<LabelVolume> {
    spec.validate()?;
    let r = spec.radius_voxels;
    let shape = spec.shape.unwrap_or(Shape3::new(2 * r + 7, 2 * r + 7, 6 * r + 12)?);
    let mut vol = LabelVolume::zeros(shape, spec.spacing);
    let points = match &spec.waypoints {
        Some(w) if w.len() >= 2 => w.clone(),
        Some(_) => {
            return Err(Error::InvalidParameter("a tube needs at least two waypoints".into()));
        }
        None => {
            let cx = ((shape.nx - 1) / 2) as f64;
            let cy = ((shape.ny - 1) / 2) as f64;
            let margin = (r + 2) as f64;
            let z1 = shape.nz as f64 - 1.0 - margin;
            if z1 <= margin {
                return Err(Error::InvalidParameter(format!(
                    "grid depth {} too small for radius {r}",
                    shape.nz
                )));
            }
            vec![[cx, cy, margin], [cx, cy, z1]]
        }
    };
    check_fits(shape, &points, r as f64)?;
    for w in points.windows(2) {
        paint_segment(&mut vol, w[0], w[1], r as f64, |_| Some(spec.class_id));
    }
    Ok(vol)
}

/// Square ring of tubes in the z mid-plane: one component, one tunnel.
pub fn make_torus(spec: &PhantomSpec) -> Result<LabelVolume> {
    spec.validate()?;
    let r = spec.radius_voxels;
    let side = 4 * r + 6;
    let margin = r + 2;
    let extent = side + 2 * margin + 1;
    let shape = spec.shape.unwrap_or(Shape3::new(extent, extent, 2 * margin + 1)?);
    let (x0, y0) = (margin as f64, margin as f64);
    let (x1, y1) = ((margin + side) as f64, (margin + side) as f64);
    let zc = ((shape.nz - 1) / 2) as f64;
    let corners = [[x0, y0, zc], [x1, y0, zc], [x1, y1, zc], [x0, y1, zc], [x0, y0, zc]];
    check_fits(shape, &corners, r as f64)?;
    let mut vol = LabelVolume::zeros(shape, spec.spacing);
    for w in corners.windows(2) {
        paint_segment(&mut vol, w[0], w[1], r as f64, |_| Some(spec.class_id));
    }
    Ok(vol)
}

/// Hollow cube whose wall is `radius_voxels` thick around a 3^3 cavity.
pub fn make_shell(spec: &PhantomSpec) -> Result<LabelVolume> {
    spec.validate()?;
    let t = spec.radius_voxels;
    let outer = 2 * t + 3;
    let shape = spec.shape.unwrap_or(Shape3::cube(outer + 2));
    if shape.nx < outer + 2 || shape.ny < outer + 2 || shape.nz < outer + 2 {
        return Err(Error::InvalidParameter(format!(
            "shell of side {outer} does not fit in {:?}",
            shape.dims()
        )));
    }
    let mut vol = LabelVolume::zeros(shape, spec.spacing);
    let inside = |c: usize, lo: usize, hi: usize| (lo..hi).contains(&c);
    for z in 0..shape.nz {
        for y in 0..shape.ny {
            for x in 0..shape.nx {
                let solid = inside(x, 1, 1 + outer) && inside(y, 1, 1 + outer) && inside(z, 1, 1 + outer);
                let hole = inside(x, 1 + t, 1 + t + 3) && inside(y, 1 + t, 1 + t + 3) && inside(z, 1 + t, 1 + t + 3);
                if solid && !hole {
                    vol.set(x, y, z, spec.class_id);
                }
            }
        }
    }
    Ok(vol)
}

/// Hub order along x for the toy Circle of Willis.
const COW_HUB_ORDER: [&str; 20] = [
    "L-MCA", "L-AChA", "L-ACA2", "L-ICA", "L-ACA1", "Acom", "R-ACA1", "R-ICA", "R-ACA2", "R-AChA", "R-MCA", "L-PCA2",
    "L-Pcom", "L-PCA1", "L-SCA", "BA", "R-SCA", "R-PCA1", "R-Pcom", "R-PCA2",
];

/// Schematic Circle of Willis realizing the default adjacency.
///
/// Each class owns a "hub" line along y at its own x position (z low).
/// Every adjacent pair gets a bridge: a riser from each hub up to a shared
/// row at z high, joined by a run whose halves carry the two labels, so the
/// pair touches exactly at the run midpoint. Rows are packed so that runs
/// sharing a row never overlap in x. With grid step `2r + 4`, any two
/// non-adjacent classes stay at least 4 voxels apart on every axis.
pub fn make_toy_cow(spec: &PhantomSpec) -> Result<LabelVolume> {
    spec.validate()?;
    let scheme = ClassScheme::circle_of_willis();
    let adjacency = default_cow_adjacency(&scheme)?;
    let r = spec.radius_voxels;
    let step = 2 * r + 4;
    let margin = r + 2;

    let hub_x: Vec<usize> = {
        let mut xs = vec![0; scheme.num_foreground()];
        for (slot, name) in COW_HUB_ORDER.iter().enumerate() {
            xs[scheme.id_of(name)? as usize - 1] = margin + slot * step;
        }
        xs
    };

    // (left class, right class, row), left hub strictly left of right hub
    let mut edges: Vec<(usize, usize)> = adjacency
        .pairs()
        .into_iter()
        .map(|(i, j)| if hub_x[i] < hub_x[j] { (i, j) } else { (j, i) })
        .collect();
    edges.sort_by_key(|&(i, j)| (hub_x[i], hub_x[j]));
    let mut row_end: Vec<usize> = Vec::new();
    let mut bridges = Vec::with_capacity(edges.len());
    for (i, j) in edges {
        let (lo, hi) = (hub_x[i], hub_x[j]);
        let row = match row_end.iter().position(|&end| end + step <= lo) {
            Some(row) => row,
            None => {
                row_end.push(0);
                row_end.len() - 1
            }
        };
        row_end[row] = hi;
        bridges.push((i, j, row));
    }

    let nrows = row_end.len();
    let nx = 2 * margin + (COW_HUB_ORDER.len() - 1) * step + 1;
    let ny = 2 * margin + (nrows - 1) * step + 1;
    let z_hub = margin;
    let z_run = margin + step;
    let nz = z_run + margin + 1;
    let shape = Shape3::new(nx, ny, nz)?;
    if let Some(s) = spec.shape {
        if s != shape {
            return Err(Error::InvalidParameter(format!(
                "toy Circle of Willis with radius {r} needs shape {:?}",
                shape.dims()
            )));
        }
    }
    let mut vol = LabelVolume::zeros(shape, spec.spacing);
    let rf = r as f64;
    let row_y = |row: usize| (margin + row * step) as f64;

    for c in 0..scheme.num_foreground() {
        let rows: Vec<usize> = bridges.iter().filter(|b| b.0 == c || b.1 == c).map(|b| b.2).collect();
        let (lo, hi) = (rows.iter().min().copied(), rows.iter().max().copied());
        if let (Some(lo), Some(hi)) = (lo, hi) {
            let x = hub_x[c] as f64;
            paint_segment(
                &mut vol,
                [x, row_y(lo), z_hub as f64],
                [x, row_y(hi), z_hub as f64],
                rf,
                |_| Some(c as u16 + 1),
            );
        }
    }
    for &(i, j, row) in &bridges {
        let y = row_y(row);
        let (xi, xj) = (hub_x[i] as f64, hub_x[j] as f64);
        let (zh, zr) = (z_hub as f64, z_run as f64);
        paint_segment(&mut vol, [xi, y, zh], [xi, y, zr], rf, |_| Some(i as u16 + 1));
        paint_segment(&mut vol, [xj, y, zh], [xj, y, zr], rf, |_| Some(j as u16 + 1));
        let mid = (xi + xj) / 2.0;
        paint_segment(&mut vol, [xi, y, zr], [xj, y, zr], rf, |c| {
            Some(if (c[0] as f64) < mid {
                i as u16 + 1
            } else {
                j as u16 + 1
            })
        });
    }

    for name in &spec.absent {
        let id = scheme.id_of(name)?;
        for v in vol.data_mut() {
            if *v == id {
                *v = 0;
            }
        }
    }
    Ok(vol)
}

pub fn generate(spec: &PhantomSpec) -> Result<LabelVolume> {
    match spec.kind {
        PhantomKind::Tube => make_tube(spec),
        PhantomKind::Torus => make_torus(spec),
        PhantomKind::Shell => make_shell(spec),
        PhantomKind::ToyCow => make_toy_cow(spec),
    }
}

fn class_components(vol: &LabelVolume, class_id: u16) -> usize {
    connected_components(&vol.class_mask(class_id), Connectivity::TwentySix).count
}

/// Run length of `class_id` voxels through `c` along `axis`.
fn run_length(vol: &LabelVolume, c: [usize; 3], axis: usize, class_id: u16) -> usize {
    let shape = vol.shape();
    let mut len = 1;
    for dir in [-1isize, 1] {
        let mut d = [0isize; 3];
        loop {
            d[axis] += dir;
            match shape.offset(c, d) {
                Some(j) if vol.data()[j] == class_id => len += 1,
                _ => break,
            }
        }
    }
    len
}

/// Centerline voxel of `class_id` closest to the centerline's centroid (ties
/// to the lowest index); a natural place for [`inject_break`].
pub fn break_site(vol: &LabelVolume, class_id: u16) -> Option<[usize; 3]> {
    let shape = vol.shape();
    let skel = hard_skeleton(&vol.class_mask(class_id));
    let pts: Vec<[usize; 3]> = (0..shape.len())
        .filter(|&i| skel.data()[i])
        .map(|i| shape.coords(i))
        .collect();
    if pts.is_empty() {
        return None;
    }
    let n = pts.len() as f64;
    let centroid: [f64; 3] = std::array::from_fn(|k| pts.iter().map(|p| p[k] as f64).sum::<f64>() / n);
    let dist = |p: &[usize; 3]| (0..3).map(|k| (p[k] as f64 - centroid[k]).powi(2)).sum::<f64>();
    pts.iter().copied().min_by(|a, b| dist(a).total_cmp(&dist(b)))
}

/// Removes a `width`-voxel slab of `class_id` centered at `position`,
/// perpendicular to the class's longest run through that voxel.
pub fn inject_break(vol: &LabelVolume, class_id: u16, position: [usize; 3], width: usize) -> Result<LabelVolume> {
    let shape = vol.shape();
    if width == 0 {
        return Err(Error::InvalidParameter("break width must be >= 1".into()));
    }
    if position.iter().zip(shape.dims()).any(|(p, n)| *p >= n)
        || vol.get(position[0], position[1], position[2]) != class_id
    {
        return Err(Error::InvalidParameter(format!(
            "break position {position:?} is not a voxel of class {class_id}"
        )));
    }
    let runs: Vec<usize> = (0..3).map(|a| run_length(vol, position, a, class_id)).collect();
    let axis = (0..3).max_by_key(|&a| (runs[a], std::cmp::Reverse(a))).unwrap();
    let reach = (0..3).filter(|&a| a != axis).map(|a| runs[a]).max().unwrap_or(1) as isize;
    let lo = position[axis] as isize - (width as isize - 1) / 2;
    let hi = lo + width as isize;
    let mut out = vol.clone();
    for i in 0..shape.len() {
        if vol.data()[i] != class_id {
            continue;
        }
        let c = shape.coords(i);
        let along = c[axis] as isize;
        let within = (0..3)
            .filter(|&a| a != axis)
            .all(|a| (c[a] as isize - position[a] as isize).abs() <= reach);
        if along >= lo && along < hi && within {
            out.data_mut()[i] = 0;
        }
    }
    Ok(out)
}

/// Axis-aligned box `[min, max)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Region {
    pub min: [usize; 3],
    pub max: [usize; 3],
}

impl Region {
    pub fn contains(&self, c: [usize; 3]) -> bool {
        (0..3).all(|k| c[k] >= self.min[k] && c[k] < self.max[k])
    }
}

/// Relabels `from_class` voxels inside `region` as `to_class`.
pub fn swap_labels(vol: &LabelVolume, region: Region, from_class: u16, to_class: u16) -> LabelVolume {
    let shape = vol.shape();
    let mut out = vol.clone();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        if *v == from_class && region.contains(shape.coords(i)) {
            *v = to_class;
        }
    }
    out
}

/// Which boundary flips [`jitter_boundary_with`] may make.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JitterMode {
    /// Each flip removes an inner-boundary voxel or adds an outer-boundary
    /// voxel with equal probability.
    Mixed,
    /// Removals only; the class loses exactly `n` voxels.
    Shrink,
    /// Additions only.
    Grow,
}

/// Mixed-mode [`jitter_boundary_with`].
pub fn jitter_boundary(vol: &LabelVolume, class_id: u16, n_voxels: usize, seed: u64) -> Result<LabelVolume> {
    jitter_boundary_with(vol, class_id, n_voxels, seed, JitterMode::Mixed)
}

/// Flips exactly `n_voxels` voxels on the original boundary of `class_id`
/// (class voxels with a non-class face neighbor, or background voxels with
/// a class face neighbor), keeping the class's 26-connected component
/// count. Each voxel flips at most once; flips that would change the count
/// are undone and not retried. Added voxels never touch another foreground
/// class.
pub fn jitter_boundary_with(
    vol: &LabelVolume,
    class_id: u16,
    n_voxels: usize,
    seed: u64,
    mode: JitterMode,
) -> Result<LabelVolume> {
    let shape = vol.shape();
    let data = vol.data();
    let face_has = |i: usize, pred: &dyn Fn(u16) -> bool| {
        let c = shape.coords(i);
        NEIGHBORS_6
            .iter()
            .filter_map(|&d| shape.offset(c, d))
            .any(|j| pred(data[j]))
    };
    let mut removable = Vec::new();
    let mut addable = Vec::new();
    for i in 0..shape.len() {
        if data[i] == class_id {
            if mode != JitterMode::Grow && face_has(i, &|l| l != class_id) {
                removable.push(i);
            }
        } else if data[i] == 0 && mode != JitterMode::Shrink && face_has(i, &|l| l == class_id) {
            let c = shape.coords(i);
            let foreign = NEIGHBORS_26
                .iter()
                .filter_map(|&d| shape.offset(c, d))
                .any(|j| data[j] != 0 && data[j] != class_id);
            if !foreign {
                addable.push(i);
            }
        }
    }
    let target_b0 = class_components(vol, class_id);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vol.clone();
    let mut done = 0;
    while done < n_voxels {
        let add = match (removable.is_empty(), addable.is_empty()) {
            (true, true) => {
                return Err(Error::InvalidParameter(format!(
                    "could only jitter {done} of {n_voxels} voxels of class {class_id}"
                )));
            }
            (true, false) => true,
            (false, true) => false,
            (false, false) => rng.random_bool(0.5),
        };
        let pool = if add { &mut addable } else { &mut removable };
        let pick = pool.swap_remove(rng.random_range(0..pool.len()));
        out.data_mut()[pick] = if add { class_id } else { 0 };
        if class_components(&out, class_id) == target_b0 {
            done += 1;
        } else {
            out.data_mut()[pick] = data[pick];
        }
    }
    Ok(out)
}

/// Piecewise-constant intensity image with additive Gaussian noise.
pub fn intensity_image(
    labels: &LabelVolume,
    foreground_mean: f64,
    background_mean: f64,
    noise_sd: f64,
    seed: u64,
) -> Result<Field3> {
    let normal =
        Normal::new(0.0, noise_sd).map_err(|e| Error::InvalidParameter(format!("noise sd {noise_sd}: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = labels
        .data()
        .iter()
        .map(|&l| {
            let base = if l != 0 { foreground_mean } else { background_mean };
            base + normal.sample(&mut rng)
        })
        .collect();
    Field3::new(labels.shape(), data)
}
