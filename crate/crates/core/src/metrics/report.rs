//! Per-case and cohort metric tables with size-group aggregation.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{absent_rate, cldice_metric, dice_metric, hd95, Hd95};
use crate::error::{Error, Result};
use crate::scheme::{ClassScheme, SizeGroup};
use crate::topology::betti_errors;
use crate::volume::{LabelVolume, VoxelSpacing};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class_id: u16,
    pub class: String,
    pub size_group: SizeGroup,
    pub dice: Option<f64>,
    pub cldice: Option<f64>,
    pub hd95_mm: Option<f64>,
    /// HD95 undefined because exactly one of pred/gt lacks the class.
    pub hd95_missing: bool,
    pub b0_error: Option<usize>,
    pub b_error: Option<usize>,
    pub gt_present: bool,
    pub pred_present: bool,
    pub gt_voxels: usize,
    pub pred_voxels: usize,
}

/// Mean and sample standard deviation (0 for a single value).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

impl MeanSd {
    pub fn of(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, sd, n })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub dice: Option<MeanSd>,
    pub cldice: Option<MeanSd>,
    pub hd95_mm: Option<MeanSd>,
    pub b0_error: Option<MeanSd>,
    pub b_error: Option<MeanSd>,
}

impl MetricSummary {
    fn of<'a>(records: impl Iterator<Item = &'a ClassMetrics> + Clone) -> Self {
        let collect = |f: &dyn Fn(&ClassMetrics) -> Option<f64>| -> Option<MeanSd> {
            MeanSd::of(&records.clone().filter_map(f).collect::<Vec<_>>())
        };
        Self {
            dice: collect(&|r| r.dice),
            cldice: collect(&|r| r.cldice),
            hd95_mm: collect(&|r| r.hd95_mm),
            b0_error: collect(&|r| r.b0_error.map(|v| v as f64)),
            b_error: collect(&|r| r.b_error.map(|v| v as f64)),
        }
    }

    fn rows(&self) -> [(&'static str, Option<MeanSd>); 5] {
        [
            ("dice", self.dice),
            ("cldice", self.cldice),
            ("hd95_mm", self.hd95_mm),
            ("b0_error", self.b0_error),
            ("b_error", self.b_error),
        ]
    }
}

/// Unweighted means over defined per-class values of one size group, or of
/// all classes for `group == "overall"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group: String,
    pub metrics: MetricSummary,
}

fn summarize(records: &[&ClassMetrics]) -> Vec<GroupSummary> {
    let mut out: Vec<GroupSummary> = SizeGroup::ALL
        .iter()
        .map(|g| GroupSummary {
            group: g.as_str().to_string(),
            metrics: MetricSummary::of(records.iter().copied().filter(|r| r.size_group == *g)),
        })
        .collect();
    out.push(GroupSummary {
        group: "overall".into(),
        metrics: MetricSummary::of(records.iter().copied()),
    });
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseMetrics {
    pub classes: Vec<ClassMetrics>,
    pub groups: Vec<GroupSummary>,
}

impl CaseMetrics {
    pub fn class(&self, class_id: u16) -> Option<&ClassMetrics> {
        self.classes.iter().find(|c| c.class_id == class_id)
    }

    pub fn group(&self, name: &str) -> Option<&GroupSummary> {
        self.groups.iter().find(|g| g.group == name)
    }
}

/// All metrics for every foreground class of one case. Classes absent from
/// both volumes only carry presence flags.
pub fn case_metrics(
    pred: &LabelVolume,
    gt: &LabelVolume,
    scheme: &ClassScheme,
    spacing: VoxelSpacing,
) -> Result<CaseMetrics> {
    if pred.shape() != gt.shape() {
        return Err(Error::shape(gt.shape().dims(), pred.shape().dims()));
    }
    gt.validate(scheme.num_classes())?;
    pred.validate(scheme.num_classes())?;
    let classes = scheme
        .classes()
        .par_iter()
        .map(|info| -> Result<ClassMetrics> {
            let (p, g) = (pred.class_mask(info.id), gt.class_mask(info.id));
            let (gt_voxels, pred_voxels) = (g.count(), p.count());
            let mut rec = ClassMetrics {
                class_id: info.id,
                class: info.name.clone(),
                size_group: info.size_group,
                dice: None,
                cldice: None,
                hd95_mm: None,
                hd95_missing: false,
                b0_error: None,
                b_error: None,
                gt_present: gt_voxels > 0,
                pred_present: pred_voxels > 0,
                gt_voxels,
                pred_voxels,
            };
            if gt_voxels == 0 && pred_voxels == 0 {
                return Ok(rec);
            }
            rec.dice = dice_metric(&p, &g)?;
            rec.cldice = cldice_metric(&p, &g)?;
            let h = hd95(&p, &g, spacing)?;
            rec.hd95_mm = h.value();
            rec.hd95_missing = h == Hd95::MissingStructure;
            let (e0, e) = betti_errors(&p, &g)?;
            rec.b0_error = Some(e0);
            rec.b_error = Some(e);
            Ok(rec)
        })
        .collect::<Result<Vec<_>>>()?;
    let groups = summarize(&classes.iter().collect::<Vec<_>>());
    Ok(CaseMetrics { classes, groups })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FprEntry {
    pub class_id: u16,
    pub class: String,
    /// Cases whose ground truth lacks the class.
    pub absent_cases: usize,
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortReport {
    /// Ordered by case id.
    pub cases: Vec<(String, CaseMetrics)>,
    pub fpr_min_voxels: usize,
    pub absent_fpr: Vec<FprEntry>,
    /// Group means pooled over every (case, class) record.
    pub summary: Vec<GroupSummary>,
}

#[derive(Serialize)]
struct ClassRow<'a> {
    case_id: &'a str,
    class: &'a str,
    dice: Option<f64>,
    cldice: Option<f64>,
    hd95_mm: Option<f64>,
    b0_error: Option<usize>,
    b_error: Option<usize>,
    gt_present: bool,
    pred_present: bool,
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    group: &'a str,
    metric: &'a str,
    mean: f64,
    sd: f64,
    n: usize,
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Invariant(format!("CSV serialization: {other:?}")),
    }
}

impl CohortReport {
    pub fn new(mut cases: Vec<(String, CaseMetrics)>, scheme: &ClassScheme, fpr_min_voxels: usize) -> Self {
        cases.sort_by(|a, b| a.0.cmp(&b.0));
        let absent_fpr = scheme
            .classes()
            .iter()
            .map(|info| {
                let counts: Vec<(usize, usize)> = cases
                    .iter()
                    .filter_map(|(_, m)| m.class(info.id))
                    .map(|r| (r.gt_voxels, r.pred_voxels))
                    .collect();
                FprEntry {
                    class_id: info.id,
                    class: info.name.clone(),
                    absent_cases: counts.iter().filter(|c| c.0 == 0).count(),
                    rate: absent_rate(counts, fpr_min_voxels),
                }
            })
            .collect();
        let all: Vec<&ClassMetrics> = cases.iter().flat_map(|(_, m)| &m.classes).collect();
        let summary = summarize(&all);
        Self {
            cases,
            fpr_min_voxels,
            absent_fpr,
            summary,
        }
    }

    /// One row per (case, class); undefined values are empty fields.
    pub fn write_class_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        for (case_id, m) in &self.cases {
            for r in &m.classes {
                w.serialize(ClassRow {
                    case_id,
                    class: &r.class,
                    dice: r.dice,
                    cldice: r.cldice,
                    hd95_mm: r.hd95_mm,
                    b0_error: r.b0_error,
                    b_error: r.b_error,
                    gt_present: r.gt_present,
                    pred_present: r.pred_present,
                })
                .map_err(|e| csv_err(path, e))?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// One row per (group, metric) with a defined mean.
    pub fn write_summary_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        for g in &self.summary {
            for (metric, stat) in g.metrics.rows() {
                if let Some(s) = stat {
                    w.serialize(SummaryRow {
                        group: &g.group,
                        metric,
                        mean: s.mean,
                        sd: s.sd,
                        n: s.n,
                    })
                    .map_err(|e| csv_err(path, e))?;
                }
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
