//! Brute-force reference implementations, deliberately naive.

use std::collections::{HashSet, VecDeque};

use cowseg::{BinaryVolume, Shape3, VoxelSpacing};
use rand::Rng;

pub fn random_mask(rng: &mut impl Rng, max_side: usize, density: f64) -> BinaryVolume {
    let shape = Shape3::new(
        rng.random_range(1..=max_side),
        rng.random_range(1..=max_side),
        rng.random_range(1..=max_side),
    )
    .unwrap();
    BinaryVolume::from_fn(shape, |_, _, _| rng.random_bool(density))
}

pub fn random_spacing(rng: &mut impl Rng) -> VoxelSpacing {
    VoxelSpacing::new(
        rng.random_range(0.3..2.5),
        rng.random_range(0.3..2.5),
        rng.random_range(0.3..2.5),
    )
    .unwrap()
}

fn voxels(mask: &BinaryVolume) -> Vec<[usize; 3]> {
    let s = mask.shape();
    let mut out = Vec::new();
    for z in 0..s.nz {
        for y in 0..s.ny {
            for x in 0..s.nx {
                if mask.get(x, y, z) {
                    out.push([x, y, z]);
                }
            }
        }
    }
    out
}

fn touching(a: [usize; 3], b: [usize; 3], full: bool) -> bool {
    let d: Vec<usize> = (0..3).map(|k| a[k].abs_diff(b[k])).collect();
    if d.iter().any(|&v| v > 1) {
        return false;
    }
    let moved = d.iter().filter(|&&v| v == 1).count();
    moved >= 1 && (full || moved == 1)
}

/// Flood fill over an explicit voxel list with pairwise adjacency tests.
pub fn bfs_components(mask: &BinaryVolume, full_connectivity: bool) -> usize {
    let pts = voxels(mask);
    let mut seen = vec![false; pts.len()];
    let mut count = 0;
    for start in 0..pts.len() {
        if seen[start] {
            continue;
        }
        count += 1;
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            for j in 0..pts.len() {
                if !seen[j] && touching(pts[i], pts[j], full_connectivity) {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    count
}

/// Background components (face connectivity) that stay off the grid border.
pub fn bfs_cavities(mask: &BinaryVolume) -> usize {
    let s = mask.shape();
    let inverted = BinaryVolume::from_fn(s, |x, y, z| !mask.get(x, y, z));
    let pts = voxels(&inverted);
    let mut seen = vec![false; pts.len()];
    let mut enclosed = 0;
    for start in 0..pts.len() {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        let mut open = false;
        while let Some(i) = queue.pop_front() {
            let p = pts[i];
            open |= (0..3).any(|k| p[k] == 0 || p[k] + 1 == s.dims()[k]);
            for j in 0..pts.len() {
                if !seen[j] && touching(p, pts[j], false) {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        if !open {
            enclosed += 1;
        }
    }
    enclosed
}

/// Counts the distinct cells of the union of closed unit cubes. Cells are
/// addressed in doubled coordinates; the number of odd coordinates is the
/// cell dimension.
pub fn euler_by_enumeration(mask: &BinaryVolume) -> i64 {
    let mut cells: HashSet<[usize; 3]> = HashSet::new();
    for [x, y, z] in voxels(mask) {
        for dz in 0..3 {
            for dy in 0..3 {
                for dx in 0..3 {
                    cells.insert([2 * x + dx, 2 * y + dy, 2 * z + dz]);
                }
            }
        }
    }
    cells
        .iter()
        .map(|c| {
            if c.iter().filter(|&&v| v % 2 == 1).count() % 2 == 0 {
                1
            } else {
                -1
            }
        })
        .sum()
}

fn distance(a: [usize; 3], b: [usize; 3], s: [f64; 3]) -> f64 {
    (0..3)
        .map(|k| ((a[k] as f64 - b[k] as f64) * s[k]).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Distance from each foreground voxel to the nearest background voxel;
/// infinite when the grid has no background.
pub fn brute_edt(mask: &BinaryVolume, spacing: VoxelSpacing) -> Vec<f64> {
    let s = mask.shape();
    let sp = spacing.as_array();
    let inverted = BinaryVolume::from_fn(s, |x, y, z| !mask.get(x, y, z));
    let bg = voxels(&inverted);
    (0..s.len())
        .map(|i| {
            let c = s.coords(i);
            if !mask.get(c[0], c[1], c[2]) {
                return 0.0;
            }
            bg.iter().map(|&b| distance(c, b, sp)).fold(f64::INFINITY, f64::min)
        })
        .collect()
}

fn brute_surface(mask: &BinaryVolume) -> Vec<[usize; 3]> {
    let d = mask.shape().dims();
    voxels(mask)
        .into_iter()
        .filter(|&[x, y, z]| {
            x == 0
                || y == 0
                || z == 0
                || x + 1 == d[0]
                || y + 1 == d[1]
                || z + 1 == d[2]
                || !mask.get(x - 1, y, z)
                || !mask.get(x + 1, y, z)
                || !mask.get(x, y - 1, z)
                || !mask.get(x, y + 1, z)
                || !mask.get(x, y, z - 1)
                || !mask.get(x, y, z + 1)
        })
        .collect()
}

/// Pooled two-way surface distances, 95th percentile by linear
/// interpolation. Both masks must be non-empty.
pub fn brute_hd95(pred: &BinaryVolume, gt: &BinaryVolume, spacing: VoxelSpacing) -> f64 {
    let sp = spacing.as_array();
    let (a, b) = (brute_surface(pred), brute_surface(gt));
    let nearest =
        |p: [usize; 3], set: &[[usize; 3]]| set.iter().map(|&q| distance(p, q, sp)).fold(f64::INFINITY, f64::min);
    let mut d: Vec<f64> = a.iter().map(|&p| nearest(p, &b)).collect();
    d.extend(b.iter().map(|&p| nearest(p, &a)));
    d.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let rank = 0.95 * (d.len() - 1) as f64;
    let (lo, frac) = (rank.floor() as usize, rank.fract());
    if lo + 1 < d.len() {
        d[lo] * (1.0 - frac) + d[lo + 1] * frac
    } else {
        d[lo]
    }
}
