mod common;

use common::oracles::{brute_edt, random_mask, random_spacing};
use common::{random_labels, random_simplex, rng};
use cowseg::morphology::{
    box_sum_3, dilate, edt, hard_skeleton, keypoint_mask, neighborhood_error, sobel_edges, soft_skeleton,
};
use cowseg::phantom::{generate, inject_break, PhantomKind, PhantomSpec};
use cowseg::scheme::{adjacency_from_json, adjacency_to_json, load_adjacency, save_adjacency};
use cowseg::topology::{connected_components, Connectivity};
use cowseg::{one_hot, AdjacencyMatrix, BinaryVolume, ClassScheme, ProbVolume, Shape3, VoxelSpacing};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn shape_strategy(max: usize) -> impl Strategy<Value = Shape3> {
    (1..=max, 1..=max, 1..=max).prop_map(|(x, y, z)| Shape3::new(x, y, z).unwrap())
}

fn field_strategy(max: usize, channels: usize) -> impl Strategy<Value = ProbVolume> {
    shape_strategy(max).prop_flat_map(move |s| {
        proptest::collection::vec(-1.0f64..1.0, channels * s.len())
            .prop_map(move |d| ProbVolume::new(channels, s, d).unwrap())
    })
}

fn mask_strategy(max: usize) -> impl Strategy<Value = BinaryVolume> {
    shape_strategy(max).prop_flat_map(|s| {
        proptest::collection::vec(any::<bool>(), s.len()).prop_map(move |b| BinaryVolume::new(s, b).unwrap())
    })
}

fn seeded_simplex(seed: u64, channels: usize, side: usize) -> ProbVolume {
    random_simplex(&mut rng(seed), channels, Shape3::cube(side))
}

fn scheme(n: usize) -> ClassScheme {
    let json = format!(
        r#"{{"classes":[{}]}}"#,
        (1..=n)
            .map(|i| format!(r#"{{"id":{i},"name":"c{i}","size":"small","side":"midline"}}"#))
            .collect::<Vec<_>>()
            .join(",")
    );
    ClassScheme::from_json(&json).unwrap()
}

#[test]
fn one_voxel_gap_error_stays_local() {
    let tube = generate(&PhantomSpec::new(PhantomKind::Tube, 1)).unwrap();
    let d = tube.shape().dims();
    let gapped = inject_break(&tube, 1, [d[0] / 2, d[1] / 2, d[2] / 2], 1).unwrap();
    let e = neighborhood_error(&one_hot(&tube, 2).unwrap(), &one_hot(&gapped, 2).unwrap()).unwrap();
    let changed = BinaryVolume::from_fn(tube.shape(), |x, y, z| tube.get(x, y, z) != gapped.get(x, y, z));
    let near = dilate(&changed, 1);
    for c in 0..2 {
        let ch = e.channel(c);
        assert!(ch.iter().any(|&v| v > 0.0));
        for (i, &v) in ch.iter().enumerate() {
            if !near.data()[i] {
                assert_eq!(v, 0.0, "error outside the gap neighborhood at {i}");
            }
        }
    }
}

#[test]
fn hard_skeleton_of_thick_and_twin_tubes() {
    let tube = generate(&PhantomSpec::new(PhantomKind::Tube, 2)).unwrap().foreground();
    let skel = hard_skeleton(&tube);
    assert!(skel.is_subset_of(&tube));
    assert_eq!(connected_components(&skel, Connectivity::TwentySix).count, 1);

    let shape = Shape3::new(15, 8, 20).unwrap();
    let twin = BinaryVolume::from_fn(shape, |x, y, z| {
        let r2 = |cx: f64| (x as f64 - cx).powi(2) + (y as f64 - 3.5).powi(2);
        (2..18).contains(&z) && (r2(3.0) <= 2.5 || r2(10.0) <= 2.5)
    });
    assert_eq!(connected_components(&twin, Connectivity::TwentySix).count, 2);
    let skel = hard_skeleton(&twin);
    assert!(skel.is_subset_of(&twin));
    assert_eq!(connected_components(&skel, Connectivity::TwentySix).count, 2);
}

/// Exact distances on random masks up to 8^3 with random anisotropic
/// spacing.
#[test]
fn edt_matches_brute_force() {
    let mut r = rng(77);
    for i in 0..100 {
        let m = random_mask(&mut r, 8, [0.5, 0.7, 0.9][i % 3]);
        let spacing = if i % 4 == 0 {
            VoxelSpacing::default()
        } else {
            random_spacing(&mut r)
        };
        let got = edt(&m, spacing);
        for (j, (a, b)) in got.data().iter().zip(brute_edt(&m, spacing)).enumerate() {
            if b.is_infinite() {
                assert!(a.is_infinite(), "mask {i} voxel {j}");
            } else {
                assert!((a - b).abs() <= 1e-9, "mask {i} voxel {j}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn one_hot_argmax_roundtrip_21_classes() {
    let labels = random_labels(&mut rng(5), 21, Shape3::cube(8), 0.8);
    let p = one_hot(&labels, 21).unwrap();
    assert!(p.is_simplex(0.0));
    assert_eq!(p.argmax(labels.spacing()), labels);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn box_sum_is_linear(x in field_strategy(6, 2), a in -3.0f64..3.0, b in -3.0f64..3.0, seed in any::<u64>()) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let y = ProbVolume::new(2, x.shape(), (0..x.data().len()).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap();
        let combo = ProbVolume::new(
            2,
            x.shape(),
            x.data().iter().zip(y.data()).map(|(u, v)| a * u + b * v).collect(),
        ).unwrap();
        let (bx, by, bc) = (box_sum_3(&x), box_sum_3(&y), box_sum_3(&combo));
        for i in 0..bc.data().len() {
            prop_assert!((bc.data()[i] - (a * bx.data()[i] + b * by.data()[i])).abs() <= 1e-6);
        }
    }

    #[test]
    fn neighborhood_error_of_self_is_zero(x in field_strategy(6, 3)) {
        prop_assert!(neighborhood_error(&x, &x).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn neighborhood_error_is_bounded_on_simplex_inputs(seed in any::<u64>(), side in 1usize..6) {
        let p = seeded_simplex(seed, 3, side);
        let labels = random_labels(&mut rng(seed ^ 1), 3, Shape3::cube(side), 0.5);
        let e = neighborhood_error(&p, &one_hot(&labels, 3).unwrap()).unwrap();
        prop_assert!(e.data().iter().all(|&v| (0.0..=27.0).contains(&v)));
    }

    #[test]
    fn soft_skeleton_never_exceeds_binary_input(m in mask_strategy(7), k in 1usize..5) {
        let s = soft_skeleton(&m.to_field(), k).unwrap();
        for (v, &inside) in s.data().iter().zip(m.data()) {
            prop_assert!(*v >= 0.0 && *v <= f64::from(u8::from(inside)));
        }
    }

    #[test]
    fn hard_skeleton_is_inside_its_mask(m in mask_strategy(7)) {
        prop_assert!(hard_skeleton(&m).is_subset_of(&m));
    }

    #[test]
    fn sobel_complement_symmetry_away_from_border(x in field_strategy(7, 1)) {
        let unit = ProbVolume::new(1, x.shape(), x.data().iter().map(|v| (v + 1.0) / 2.0).collect()).unwrap();
        let flipped = ProbVolume::new(1, x.shape(), unit.data().iter().map(|v| 1.0 - v).collect()).unwrap();
        let (a, b) = (sobel_edges(&unit), sobel_edges(&flipped));
        let s = x.shape();
        for i in 0..s.len() {
            if !s.on_border(s.coords(i)) {
                prop_assert!((a.data()[i] - b.data()[i]).abs() <= 1e-9);
            }
        }
        prop_assert!(a.data().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn sobel_of_constant_is_zero_inside(c in -2.0f64..2.0, s in shape_strategy(6)) {
        let e = sobel_edges(&ProbVolume::new(1, s, vec![c; s.len()]).unwrap());
        for i in 0..s.len() {
            if !s.on_border(s.coords(i)) {
                prop_assert!(e.data()[i].abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn dilation_composes_and_grows(m in mask_strategy(6), a in 0usize..3, b in 0usize..3) {
        let once = dilate(&m, a);
        prop_assert!(m.is_subset_of(&once));
        prop_assert_eq!(dilate(&once, b), dilate(&m, a + b));
    }

    #[test]
    fn keypoint_mask_is_monotone_in_adjacency(seed in any::<u64>(), i in 0usize..4, j in 0usize..4) {
        let labels = random_labels(&mut rng(seed), 5, Shape3::cube(6), 0.7);
        let mut a = AdjacencyMatrix::from_index_pairs(4, &[(0, 1)]).unwrap();
        let before = keypoint_mask(&labels, &a, 1);
        if i != j {
            a.set(i, j, true);
        }
        let after = keypoint_mask(&labels, &a, 1);
        prop_assert!(before.is_subset_of(&after));
    }

    #[test]
    fn one_hot_is_an_exact_simplex(seed in any::<u64>(), classes in 2usize..22, side in 1usize..6) {
        let labels = random_labels(&mut rng(seed), classes, Shape3::cube(side), 0.6);
        let p = one_hot(&labels, classes).unwrap();
        for v in 0..labels.shape().len() {
            let sum: f64 = (0..classes).map(|c| p.get(c, v)).sum();
            prop_assert_eq!(sum, 1.0);
        }
        prop_assert_eq!(p.argmax(labels.spacing()), labels);
    }

    #[test]
    fn adjacency_and_complement_partition(pairs in proptest::collection::vec((0usize..8, 0usize..8), 0..20)) {
        let pairs: Vec<(usize, usize)> = pairs.into_iter().filter(|(i, j)| i != j).collect();
        let a = AdjacencyMatrix::from_index_pairs(8, &pairs).unwrap();
        prop_assert!(a.is_symmetric());
        let ones = (0..8).flat_map(|i| (0..8).map(move |j| (i, j))).filter(|&(i, j)| i != j && a.get(i, j)).count();
        prop_assert_eq!(ones + a.complement_count(), 8 * 7);
        for i in 0..8 {
            prop_assert!(!a.get(i, i));
        }
    }

    #[test]
    fn adjacency_save_load_roundtrip(pairs in proptest::collection::vec((0usize..6, 0usize..6), 0..12)) {
        let pairs: Vec<(usize, usize)> = pairs.into_iter().filter(|(i, j)| i != j).collect();
        let sch = scheme(6);
        let a = AdjacencyMatrix::from_index_pairs(6, &pairs).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("adjacency.json");
        save_adjacency(&path, &a, &sch).unwrap();
        let back = load_adjacency(&path, &sch).unwrap();
        prop_assert_eq!(&back, &a);
        prop_assert_eq!(adjacency_to_json(&back, &sch), std::fs::read_to_string(&path).unwrap());
        prop_assert_eq!(adjacency_from_json(&adjacency_to_json(&a, &sch), &sch).unwrap(), a);
    }
}
