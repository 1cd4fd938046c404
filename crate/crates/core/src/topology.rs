//! Connected components, Euler characteristic and Betti numbers of binary
//! volumes, treating each foreground voxel as a closed unit cube.
//!
//! Foreground uses 26-connectivity and background 6-connectivity, the dual
//! pair under which component counts, cavities and the Euler characteristic
//! of the closed-cube complex agree.

use crate::error::{Error, Result};
use crate::volume::{BinaryVolume, NEIGHBORS_26, NEIGHBORS_6};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Six,
    TwentySix,
}

impl Connectivity {
    fn offsets(self) -> &'static [[isize; 3]] {
        match self {
            Connectivity::Six => &NEIGHBORS_6,
            Connectivity::TwentySix => &NEIGHBORS_26,
        }
    }
}

impl TryFrom<u32> for Connectivity {
    type Error = Error;

    fn try_from(v: u32) -> Result<Self> {
        match v {
            6 => Ok(Connectivity::Six),
            26 => Ok(Connectivity::TwentySix),
            _ => Err(Error::InvalidParameter(format!(
                "connectivity must be 6 or 26, got {v}"
            ))),
        }
    }
}

/// Disjoint-set forest with path halving and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    pub fn new(len: usize) -> Self {
        Self {
            parent: (0..len as u32).collect(),
            size: vec![1; len],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] as usize != x {
            let p = self.parent[x] as usize;
            self.parent[x] = self.parent[p];
            x = p;
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra as u32;
        self.size[ra] += self.size[rb];
        true
    }
}

/// Component labels (0 for background, `1..=count` otherwise) numbered in
/// the order their first voxel appears in the linear scan.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Components {
    pub labels: Vec<u32>,
    pub count: usize,
}

/// Offsets that precede a voxel in scan order, so each pair is visited once.
fn backward_offsets(conn: Connectivity) -> Vec<[isize; 3]> {
    conn.offsets()
        .iter()
        .copied()
        .filter(|d| (d[2], d[1], d[0]) < (0, 0, 0))
        .collect()
}

pub fn connected_components(mask: &BinaryVolume, connectivity: Connectivity) -> Components {
    let shape = mask.shape();
    let data = mask.data();
    let mut uf = UnionFind::new(shape.len());
    let back = backward_offsets(connectivity);
    for i in 0..shape.len() {
        if !data[i] {
            continue;
        }
        let c = shape.coords(i);
        for &d in &back {
            if let Some(j) = shape.offset(c, d) {
                if data[j] {
                    uf.union(i, j);
                }
            }
        }
    }
    let mut root_label = vec![0u32; shape.len()];
    let mut labels = vec![0u32; shape.len()];
    let mut count = 0u32;
    for i in 0..shape.len() {
        if !data[i] {
            continue;
        }
        let r = uf.find(i);
        if root_label[r] == 0 {
            count += 1;
            root_label[r] = count;
        }
        labels[i] = root_label[r];
    }
    Components {
        labels,
        count: count as usize,
    }
}

/// Euler characteristic `V - E + F - C` of the union of closed foreground
/// cubes.
///
/// Cells are addressed on the doubled grid `[0, 2n]^3`: a cell's dimension
/// is the number of odd coordinates, and it belongs to the complex when any
/// voxel whose closed cube contains it is foreground.
pub fn euler_characteristic(mask: &BinaryVolume) -> i64 {
    let shape = mask.shape();
    let [nx, ny, nz] = shape.dims();
    let data = mask.data();
    // voxel range touching doubled coordinate `a` on an axis of length `n`
    let span = |a: usize, n: usize| -> (usize, usize) {
        if a % 2 == 1 {
            let v = (a - 1) / 2;
            (v, v)
        } else {
            let hi = (a / 2).min(n - 1);
            let lo = if a == 0 { 0 } else { a / 2 - 1 };
            (lo, hi.max(lo))
        }
    };
    let mut chi = 0i64;
    for c in 0..=2 * nz {
        let (z0, z1) = span(c, nz);
        for b in 0..=2 * ny {
            let (y0, y1) = span(b, ny);
            for a in 0..=2 * nx {
                let (x0, x1) = span(a, nx);
                let mut present = false;
                'scan: for z in z0..=z1 {
                    for y in y0..=y1 {
                        for x in x0..=x1 {
                            if data[shape.index(x, y, z)] {
                                present = true;
                                break 'scan;
                            }
                        }
                    }
                }
                if present {
                    let dim = (a % 2) + (b % 2) + (c % 2);
                    chi += if dim % 2 == 0 { 1 } else { -1 };
                }
            }
        }
    }
    chi
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct BettiNumbers {
    pub b0: usize,
    pub b1: usize,
    pub b2: usize,
}

impl BettiNumbers {
    pub fn euler(&self) -> i64 {
        self.b0 as i64 - self.b1 as i64 + self.b2 as i64
    }
}

/// Background components (6-connected) that do not reach the volume border.
pub fn enclosed_cavities(mask: &BinaryVolume) -> usize {
    let shape = mask.shape();
    let background = BinaryVolume::new(shape, mask.data().iter().map(|&b| !b).collect()).expect("shape preserved");
    let comps = connected_components(&background, Connectivity::Six);
    let mut touches = vec![false; comps.count + 1];
    for i in 0..shape.len() {
        let l = comps.labels[i] as usize;
        if l != 0 && shape.on_border(shape.coords(i)) {
            touches[l] = true;
        }
    }
    touches[1..].iter().filter(|&&t| !t).count()
}

pub fn betti_numbers(mask: &BinaryVolume) -> Result<BettiNumbers> {
    match mask.support_box(1) {
        None => Ok(BettiNumbers { b0: 0, b1: 0, b2: 0 }),
        Some((lo, hi)) if lo != [0; 3] || hi != mask.shape().dims() => betti_full(&mask.crop(lo, hi)),
        Some(_) => betti_full(mask),
    }
}

fn betti_full(mask: &BinaryVolume) -> Result<BettiNumbers> {
    let b0 = connected_components(mask, Connectivity::TwentySix).count;
    let b2 = enclosed_cavities(mask);
    let chi = euler_characteristic(mask);
    let b1 = b0 as i64 + b2 as i64 - chi;
    if b1 < 0 {
        return Err(Error::Invariant(format!("negative b1 (b0={b0}, b2={b2}, chi={chi})")));
    }
    Ok(BettiNumbers {
        b0,
        b1: b1 as usize,
        b2,
    })
}

/// `(|Δb0|, |Δb0| + |Δb1|)` between two masks.
pub fn betti_errors(pred: &BinaryVolume, gt: &BinaryVolume) -> Result<(usize, usize)> {
    pred.check_same_shape(gt)?;
    let p = betti_numbers(pred)?;
    let g = betti_numbers(gt)?;
    let e0 = p.b0.abs_diff(g.b0);
    Ok((e0, e0 + p.b1.abs_diff(g.b1)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Shape3;

    fn bar2() -> BinaryVolume {
        let s = Shape3::new(4, 3, 3).unwrap();
        BinaryVolume::from_fn(s, |x, y, z| (1..3).contains(&x) && y == 1 && z == 1)
    }

    #[test]
    fn cropped_betti_equals_full() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        for _ in 0..60 {
            let s = Shape3::new(
                rng.random_range(4..10),
                rng.random_range(4..10),
                rng.random_range(4..10),
            )
            .unwrap();
            let lo: [usize; 3] = std::array::from_fn(|_| rng.random_range(0..3));
            let hi: [usize; 3] = std::array::from_fn(|a| rng.random_range(lo[a] + 1..=s.dims()[a]));
            let density = rng.random_range(0.3..0.9);
            let m = BinaryVolume::from_fn(s, |x, y, z| {
                let c = [x, y, z];
                (0..3).all(|a| c[a] >= lo[a] && c[a] < hi[a]) && rng.random_bool(density)
            });
            assert_eq!(betti_numbers(&m).unwrap(), betti_full(&m).unwrap());
        }
    }

    #[test]
    fn empty_volume() {
        let m = BinaryVolume::empty(Shape3::cube(4));
        assert_eq!(connected_components(&m, Connectivity::TwentySix).count, 0);
        assert_eq!(euler_characteristic(&m), 0);
        assert_eq!(betti_numbers(&m).unwrap(), BettiNumbers { b0: 0, b1: 0, b2: 0 });
    }

    #[test]
    fn corner_contact() {
        let mut m = BinaryVolume::empty(Shape3::cube(3));
        m.set(0, 0, 0, true);
        m.set(1, 1, 1, true);
        assert_eq!(connected_components(&m, Connectivity::TwentySix).count, 1);
        assert_eq!(connected_components(&m, Connectivity::Six).count, 2);
    }

    #[test]
    fn labels_follow_scan_order() {
        let mut m = BinaryVolume::empty(Shape3::new(5, 1, 1).unwrap());
        m.set(4, 0, 0, true);
        m.set(0, 0, 0, true);
        let c = connected_components(&m, Connectivity::Six);
        assert_eq!(c.labels, vec![1, 0, 0, 0, 2]);
    }

    #[test]
    fn euler_small_cases() {
        let mut one = BinaryVolume::empty(Shape3::cube(3));
        one.set(1, 1, 1, true);
        assert_eq!(euler_characteristic(&one), 1);
        assert_eq!(euler_characteristic(&bar2()), 1);
        let ring = BinaryVolume::from_fn(Shape3::new(3, 3, 1).unwrap(), |x, y, _| !(x == 1 && y == 1));
        assert_eq!(euler_characteristic(&ring), 0);
        assert_eq!(betti_numbers(&ring).unwrap(), BettiNumbers { b0: 1, b1: 1, b2: 0 });
    }

    #[test]
    fn ball_and_shell() {
        let s = Shape3::cube(5);
        let ball = BinaryVolume::from_fn(s, |x, y, z| {
            (1..4).contains(&x) && (1..4).contains(&y) && (1..4).contains(&z)
        });
        assert_eq!(betti_numbers(&ball).unwrap(), BettiNumbers { b0: 1, b1: 0, b2: 0 });
        let shell = BinaryVolume::from_fn(s, |x, y, z| [x, y, z].iter().any(|&c| c == 0 || c == 4));
        assert_eq!(euler_characteristic(&shell), 2);
        assert_eq!(betti_numbers(&shell).unwrap(), BettiNumbers { b0: 1, b1: 0, b2: 1 });
    }

    #[test]
    fn connectivity_parse() {
        assert_eq!(Connectivity::try_from(6).unwrap(), Connectivity::Six);
        assert!(Connectivity::try_from(18).is_err());
    }
}
