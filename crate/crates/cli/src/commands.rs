use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use cowseg::io::{read_labels, read_prediction, volume_stem, write_labels, write_probs, Prediction};
use cowseg::losses::{gradient_suite, PreparedTarget};
use cowseg::metrics::{case_metrics, mean_diameter, CaseMetrics, CohortReport};
use cowseg::phantom::{
    break_site, generate, inject_break, jitter_boundary_with, swap_labels, JitterMode, PhantomKind, PhantomSpec, Region,
};
use cowseg::{one_hot, LabelVolume, VoxelSpacing};
use rayon::prelude::*;
use serde::Serialize;

use crate::{write_text, CliError, CliResult, Context};

pub struct MetricsArgs {
    pub pred_dir: PathBuf,
    pub gt_dir: PathBuf,
    pub out: PathBuf,
    pub summary: Option<PathBuf>,
    pub json: Option<PathBuf>,
    pub fpr_threshold: usize,
    pub jobs: Option<usize>,
}

fn list_volumes(dir: &Path) -> CliResult<BTreeMap<String, PathBuf>> {
    let entries =
        std::fs::read_dir(dir).map_err(|e| CliError::Validation(format!("reading {}: {e}", dir.display())))?;
    let mut out = BTreeMap::new();
    for entry in entries {
        let path = entry
            .map_err(|e| CliError::Validation(format!("reading {}: {e}", dir.display())))?
            .path();
        let Some(stem) = volume_stem(&path) else { continue };
        if let Some(prev) = out.insert(stem.clone(), path.clone()) {
            return Err(CliError::Validation(format!(
                "stem `{stem}` appears twice: {} and {}",
                prev.display(),
                path.display()
            )));
        }
    }
    Ok(out)
}

fn prediction_labels(path: &Path, spacing: VoxelSpacing) -> CliResult<LabelVolume> {
    Ok(match read_prediction(path)? {
        Prediction::Labels(l) => l,
        Prediction::Probs(p, _) => p.argmax(spacing),
    })
}

fn score_case(ctx: &Context, pred: &Path, gt: &Path) -> CliResult<CaseMetrics> {
    let gt_vol = read_labels(gt)?;
    let pred_vol = prediction_labels(pred, gt_vol.spacing())?;
    case_metrics(&pred_vol, &gt_vol, &ctx.scheme, gt_vol.spacing())
        .map_err(|e| CliError::Validation(format!("{} vs {}: {e}", pred.display(), gt.display())))
}

pub fn metrics(ctx: &Context, args: &MetricsArgs) -> CliResult<()> {
    let preds = list_volumes(&args.pred_dir)?;
    let gts = list_volumes(&args.gt_dir)?;
    let pred_only: Vec<&String> = preds.keys().filter(|k| !gts.contains_key(*k)).collect();
    let gt_only: Vec<&String> = gts.keys().filter(|k| !preds.contains_key(*k)).collect();
    if !pred_only.is_empty() || !gt_only.is_empty() {
        for s in &pred_only {
            eprintln!("unmatched prediction: {s}");
        }
        for s in &gt_only {
            eprintln!("unmatched ground truth: {s}");
        }
        return Err(CliError::Validation(format!(
            "{} unmatched case stem(s)",
            pred_only.len() + gt_only.len()
        )));
    }
    if preds.is_empty() {
        return Err(CliError::Validation(format!(
            "no volumes in {}",
            args.pred_dir.display()
        )));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Invariant(format!("thread pool: {e}")))?;
    let cases = pool.install(|| {
        preds
            .par_iter()
            .map(|(stem, pred)| Ok((stem.clone(), score_case(ctx, pred, &gts[stem])?)))
            .collect::<CliResult<Vec<_>>>()
    })?;
    let report = CohortReport::new(cases, &ctx.scheme, args.fpr_threshold);
    report.write_class_csv(&args.out)?;
    if let Some(p) = &args.summary {
        report.write_summary_csv(p)?;
    }
    if let Some(p) = &args.json {
        write_text(p, &(report.to_json() + "\n"))?;
    }
    println!("scored {} case(s) -> {}", report.cases.len(), args.out.display());
    Ok(())
}

pub fn loss(ctx: &Context, pred: &Path, gt: &Path, grad: Option<&Path>) -> CliResult<()> {
    let gt_vol = read_labels(gt)?;
    let target = PreparedTarget::new(&gt_vol, &ctx.scheme, &ctx.adjacency()?, &ctx.loss_config()?)?;
    let probs = match read_prediction(pred)? {
        Prediction::Labels(l) => one_hot(&l, ctx.scheme.num_classes())?,
        Prediction::Probs(p, _) => p,
    };
    let breakdown = target.evaluate(&probs)?;
    if !breakdown.total.is_finite() {
        return Err(CliError::Invariant(format!("non-finite loss {}", breakdown.total)));
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&breakdown).expect("breakdown serializes")
    );
    if let Some(path) = grad {
        let g = &breakdown.gradients.as_ref().expect("gradients kept").total;
        write_probs(g, gt_vol.spacing(), path)?;
    }
    Ok(())
}

pub fn gradcheck(seed: u64, size: usize, classes: usize, samples: usize) -> CliResult<()> {
    let suite = gradient_suite(size, classes, seed, samples)?;
    println!("{}", serde_json::to_string_pretty(&suite).expect("suite serializes"));
    let failed: Vec<&str> = suite.iter().filter(|e| !e.passed).map(|e| e.term).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Invariant(format!(
            "gradient check failed for {}",
            failed.join(", ")
        )))
    }
}

pub fn phantom(
    ctx: &Context,
    kind: &str,
    out: &Path,
    variants: &[String],
    seed: u64,
    radius: usize,
    spacing: f64,
) -> CliResult<()> {
    let kind: PhantomKind = kind.parse()?;
    if !variants.is_empty() && kind != PhantomKind::ToyCow {
        return Err(CliError::Validation("variants apply to toy_cow only".into()));
    }
    let mut spec = PhantomSpec::new(kind, radius)
        .with_seed(seed)
        .with_spacing(VoxelSpacing::isotropic(spacing)?);
    for v in variants {
        spec = spec.with_variant(v, &ctx.scheme)?;
    }
    write_labels(&generate(&spec)?, out)?;
    Ok(())
}

pub enum Perturbation {
    Break { width: usize },
    Jitter { voxels: usize, seed: u64, shrink: bool },
    Swap { to: String },
}

pub fn perturb(ctx: &Context, input: &Path, out: &Path, class: &str, op: Perturbation) -> CliResult<()> {
    let vol = read_labels(input)?;
    vol.validate(ctx.scheme.num_classes())?;
    let id = ctx.scheme.id_of(class)?;
    let result = match op {
        Perturbation::Break { width } => {
            let site = break_site(&vol, id)
                .ok_or_else(|| CliError::Validation(format!("class `{class}` is absent from {}", input.display())))?;
            inject_break(&vol, id, site, width)?
        }
        Perturbation::Jitter { voxels, seed, shrink } => {
            let mode = if shrink { JitterMode::Shrink } else { JitterMode::Mixed };
            jitter_boundary_with(&vol, id, voxels, seed, mode)?
        }
        Perturbation::Swap { to } => {
            let all = Region {
                min: [0; 3],
                max: vol.shape().dims(),
            };
            swap_labels(&vol, all, id, ctx.scheme.id_of(&to)?)
        }
    };
    write_labels(&result, out)?;
    Ok(())
}

#[derive(Serialize)]
struct DiameterRow<'a> {
    class: &'a str,
    diameter_mm: Option<f64>,
}

pub fn diameters(ctx: &Context, seg: &Path, out: &Path) -> CliResult<()> {
    let vol = read_labels(seg)?;
    vol.validate(ctx.scheme.num_classes())?;
    let csv_err = |e: csv::Error| CliError::Validation(format!("writing {}: {e}", out.display()));
    let mut w = csv::Writer::from_path(out).map_err(csv_err)?;
    for info in ctx.scheme.classes() {
        w.serialize(DiameterRow {
            class: &info.name,
            diameter_mm: mean_diameter(&vol, info.id, vol.spacing()),
        })
        .map_err(csv_err)?;
    }
    w.flush()
        .map_err(|e| CliError::Validation(format!("writing {}: {e}", out.display())))
}
