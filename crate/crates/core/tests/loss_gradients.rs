mod common;

use common::{random_labels, random_simplex, rng};
use cowseg::losses::{
    breakage_cldice_loss, ce_loss, composite_loss, cooccurrence_fn_loss, cooccurrence_fp_loss, finite_difference_check,
    radius_dice_loss, GradCheckOptions, GradCheckReport, LossConfig,
};
use cowseg::morphology::keypoint_mask;
use cowseg::{one_hot, AdjacencyMatrix, ClassScheme, Field3, Shape3};

const CLASSES: usize = 4;

fn scheme() -> ClassScheme {
    ClassScheme::from_json(
        r#"{"classes":[
        {"id":1,"name":"a","size":"large","side":"left"},
        {"id":2,"name":"b","size":"medium","side":"midline"},
        {"id":3,"name":"c","size":"small","side":"right"}]}"#,
    )
    .unwrap()
}

fn adjacency() -> AdjacencyMatrix {
    AdjacencyMatrix::from_index_pairs(3, &[(0, 1), (1, 2)]).unwrap()
}

fn opts(seed: u64) -> GradCheckOptions {
    GradCheckOptions {
        samples: 300,
        seed,
        ..Default::default()
    }
}

fn assert_report(name: &str, r: &GradCheckReport, tol: f64) {
    println!(
        "{name}: max rel err {:.3e} over {} coords ({} excluded)",
        r.max_relative_error,
        r.evaluated,
        r.excluded.len()
    );
    assert!(r.evaluated >= 200, "{name}: only {} coordinates evaluated", r.evaluated);
    assert!(r.max_relative_error < tol, "{name}: {} >= {tol}", r.max_relative_error);
}

#[test]
fn cross_entropy_gradient() {
    let mut g = rng(1);
    let s = Shape3::cube(6);
    let pred = random_simplex(&mut g, CLASSES, s);
    let gt = random_labels(&mut g, CLASSES, s, 0.5);
    let r = finite_difference_check(|p| ce_loss(p, &gt, 1e-5), &pred, &opts(1)).unwrap();
    assert_report("ce", &r, 1e-5);
}

#[test]
fn weighted_dice_gradient() {
    let mut g = rng(2);
    let s = Shape3::cube(6);
    let pred = random_simplex(&mut g, CLASSES, s);
    let gt = one_hot(&random_labels(&mut g, CLASSES, s, 0.5), CLASSES).unwrap();
    let w = Field3::new(
        s,
        (0..s.len())
            .map(|_| 1.0 + 1.7 * rand::Rng::random::<f64>(&mut g))
            .collect(),
    )
    .unwrap();
    let r = finite_difference_check(|p| radius_dice_loss(&gt, p, &w, 1e-5, false), &pred, &opts(2)).unwrap();
    assert_report("dice", &r, 1e-4);
}

#[test]
fn breakage_cldice_gradient() {
    let mut g = rng(3);
    let s = Shape3::cube(6);
    let pred = random_simplex(&mut g, CLASSES, s);
    let gt = one_hot(&random_labels(&mut g, CLASSES, s, 0.5), CLASSES).unwrap();
    let cfg = LossConfig {
        skeleton_iterations: 2,
        ..LossConfig::default()
    };
    let r = finite_difference_check(|p| breakage_cldice_loss(p, &gt, &cfg), &pred, &opts(3)).unwrap();
    assert_report("cldice", &r, 1e-3);
}

#[test]
fn cooccurrence_fp_gradient() {
    let mut g = rng(4);
    let s = Shape3::cube(6);
    let pred = random_simplex(&mut g, CLASSES, s);
    let a = adjacency();
    let cfg = LossConfig::default();
    let r = finite_difference_check(|p| cooccurrence_fp_loss(p, &a, &cfg), &pred, &opts(4)).unwrap();
    assert_report("fp", &r, 1e-4);
}

#[test]
fn cooccurrence_fn_gradient() {
    let mut g = rng(5);
    let s = Shape3::cube(6);
    let pred = random_simplex(&mut g, CLASSES, s);
    let labels = random_labels(&mut g, CLASSES, s, 0.6);
    let gt = one_hot(&labels, CLASSES).unwrap();
    let a = adjacency();
    let mask = keypoint_mask(&labels, &a, 1);
    let cfg = LossConfig::default();
    let r = finite_difference_check(|p| cooccurrence_fn_loss(p, &gt, &a, &mask, &cfg), &pred, &opts(5)).unwrap();
    assert_report("fn", &r, 1e-4);
}

#[test]
fn composite_gradient() {
    let mut g = rng(6);
    let s = Shape3::cube(6);
    let pred = random_simplex(&mut g, CLASSES, s);
    let labels = random_labels(&mut g, CLASSES, s, 0.5);
    let cfg = LossConfig {
        skeleton_iterations: 2,
        ..LossConfig::default()
    };
    let (sc, a) = (scheme(), adjacency());
    let r = finite_difference_check(
        |p| composite_loss(p, &labels, &sc, &a, &cfg).map(|b| b.total_value()),
        &pred,
        &opts(6),
    )
    .unwrap();
    assert_report("composite", &r, 1e-3);
}
