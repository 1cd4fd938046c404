use cowseg::morphology::dilate;
use cowseg::phantom::{
    break_site, generate, inject_break, jitter_boundary, jitter_boundary_with, JitterMode, PhantomKind, PhantomSpec,
};
use cowseg::scheme::default_cow_adjacency;
use cowseg::topology::{betti_numbers, connected_components, Connectivity};
use cowseg::{ClassScheme, LabelVolume, Shape3};

fn components(v: &LabelVolume, id: u16) -> usize {
    connected_components(&v.class_mask(id), Connectivity::TwentySix).count
}

#[test]
fn toy_cow_realizes_the_default_adjacency() {
    let sch = ClassScheme::circle_of_willis();
    let a = default_cow_adjacency(&sch).unwrap();
    for radius in [1, 2] {
        let cow = generate(&PhantomSpec::new(PhantomKind::ToyCow, radius)).unwrap();
        for i in 0..20u16 {
            let mi = cow.class_mask(i + 1);
            assert_eq!(components(&cow, i + 1), 1, "{}", sch.name(i + 1));
            let touch = dilate(&mi, 1);
            let apart = dilate(&mi, 2);
            for j in 0..20u16 {
                if i == j {
                    continue;
                }
                let mj = cow.class_mask(j + 1);
                if a.get(i as usize, j as usize) {
                    assert!(
                        touch.intersection_count(&mj) > 0,
                        "{} - {}",
                        sch.name(i + 1),
                        sch.name(j + 1)
                    );
                } else {
                    // at least two background voxels between the supports
                    assert_eq!(
                        apart.intersection_count(&mj),
                        0,
                        "{} - {}",
                        sch.name(i + 1),
                        sch.name(j + 1)
                    );
                }
            }
        }
    }
}

#[test]
fn generators_are_deterministic() {
    for kind in [
        PhantomKind::Tube,
        PhantomKind::Torus,
        PhantomKind::Shell,
        PhantomKind::ToyCow,
    ] {
        let spec = PhantomSpec::new(kind, 2).with_seed(9);
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
    }
    let cow = generate(&PhantomSpec::new(PhantomKind::ToyCow, 1)).unwrap();
    let id = 4;
    assert_eq!(
        jitter_boundary(&cow, id, 15, 3).unwrap(),
        jitter_boundary(&cow, id, 15, 3).unwrap()
    );
}

#[test]
fn invalid_geometry_is_rejected() {
    assert!(generate(&PhantomSpec::new(PhantomKind::Torus, 3).with_shape(Shape3::cube(8))).is_err());
    assert!(generate(&PhantomSpec::new(PhantomKind::Shell, 2).with_shape(Shape3::cube(6))).is_err());
    assert!(generate(&PhantomSpec::new(PhantomKind::ToyCow, 1).with_shape(Shape3::cube(20))).is_err());
    assert!(generate(&PhantomSpec::new(PhantomKind::Tube, 0)).is_err());
}

#[test]
fn break_adds_one_component_to_every_toy_cow_artery() {
    let cow = generate(&PhantomSpec::new(PhantomKind::ToyCow, 1)).unwrap();
    for id in 1..=20 {
        let site = break_site(&cow, id).unwrap();
        let broken = inject_break(&cow, id, site, 1).unwrap();
        assert_eq!(components(&broken, id), 2, "class {id}");
        for other in (1..=20).filter(|&o| o != id) {
            assert_eq!(broken.count(other), cow.count(other));
        }
    }
}

#[test]
fn tube_break_increments_b0() {
    let t = generate(&PhantomSpec::new(PhantomKind::Tube, 2)).unwrap();
    let site = break_site(&t, 1).unwrap();
    let broken = inject_break(&t, 1, site, 2).unwrap();
    assert_eq!(betti_numbers(&broken.foreground()).unwrap().b0, 2);
}

#[test]
fn jitter_preserves_components_for_every_mode_and_class() {
    let cow = generate(&PhantomSpec::new(PhantomKind::ToyCow, 1)).unwrap();
    for id in [1u16, 8, 11, 17] {
        for (seed, mode) in [(0, JitterMode::Mixed), (1, JitterMode::Shrink), (2, JitterMode::Grow)] {
            let out = jitter_boundary_with(&cow, id, 12, seed, mode).unwrap();
            let flipped = cow.data().iter().zip(out.data()).filter(|(a, b)| a != b).count();
            assert_eq!(flipped, 12);
            assert_eq!(components(&out, id), 1, "class {id} {mode:?}");
            assert!(out
                .data()
                .iter()
                .zip(cow.data())
                .all(|(&o, &c)| o == c || o == id || c == id));
        }
    }
}

#[test]
fn variant_removes_exactly_one_artery() {
    let sch = ClassScheme::circle_of_willis();
    let full = generate(&PhantomSpec::new(PhantomKind::ToyCow, 1)).unwrap();
    let spec = PhantomSpec::new(PhantomKind::ToyCow, 1)
        .with_variant("no-pcom-right", &sch)
        .unwrap();
    let v = generate(&spec).unwrap();
    let id = sch.id_of("R-Pcom").unwrap();
    assert_eq!(v.count(id), 0);
    for other in (1..=20).filter(|&o| o != id) {
        assert_eq!(v.count(other), full.count(other));
    }
}
