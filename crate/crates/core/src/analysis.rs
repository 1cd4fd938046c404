//! Reliability and cohort statistics: ICC(3,1), a permutation t-test,
//! Benjamini-Hochberg adjustment and simple linear regression.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Subjects in rows, repeated scans in columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementTable {
    rows: Vec<Vec<f64>>,
}

impl MeasurementTable {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::InvalidParameter("ICC needs at least 2 subjects".into()));
        }
        let k = rows[0].len();
        if k < 2 {
            return Err(Error::InvalidParameter("ICC needs at least 2 scans".into()));
        }
        if let Some(bad) = rows.iter().position(|r| r.len() != k) {
            return Err(Error::InvalidParameter(format!(
                "subject {bad} has {} scans, expected {k}",
                rows[bad].len()
            )));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("missing or non-finite measurement".into()));
        }
        Ok(Self { rows })
    }

    pub fn subjects(&self) -> usize {
        self.rows.len()
    }

    pub fn scans(&self) -> usize {
        self.rows[0].len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }
}

/// Two-way mixed, consistency, single-measure ICC
/// `(MS_R - MS_E) / (MS_R + (k-1) MS_E)`. A table without row or residual
/// variation (e.g. every cell equal) gives 1.
pub fn icc_3_1(table: &MeasurementTable) -> f64 {
    let (n, k) = (table.subjects(), table.scans());
    let rows = table.rows();
    let grand = rows.iter().flatten().sum::<f64>() / (n * k) as f64;
    let row_means: Vec<f64> = rows.iter().map(|r| r.iter().sum::<f64>() / k as f64).collect();
    let col_means: Vec<f64> = (0..k)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let ss_rows = k as f64 * row_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let ss_err: f64 = rows
        .iter()
        .zip(&row_means)
        .flat_map(|(r, rm)| {
            r.iter()
                .zip(&col_means)
                .map(move |(v, cm)| (v - rm - cm + grand).powi(2))
        })
        .sum();
    let ss_total: f64 = rows.iter().flatten().map(|v| (v - grand).powi(2)).sum();
    // residuals left by rounding in the means are not measurement error
    let ss_err = if ss_err <= 1e-12 * ss_total { 0.0 } else { ss_err };
    let ms_rows = ss_rows / (n - 1) as f64;
    let ms_err = ss_err / ((n - 1) * (k - 1)) as f64;
    let denom = ms_rows + (k - 1) as f64 * ms_err;
    if denom == 0.0 {
        return 1.0;
    }
    (ms_rows - ms_err) / denom
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0))
}

/// Welch's unequal-variance t statistic. Equal means give 0; distinct
/// means with zero spread give a signed infinity.
pub fn welch_t(a: &[f64], b: &[f64]) -> f64 {
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let diff = ma - mb;
    let se = (va / a.len() as f64 + vb / b.len() as f64).sqrt();
    if diff == 0.0 {
        0.0
    } else if se == 0.0 {
        diff.signum() * f64::INFINITY
    } else {
        diff / se
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermutationTest {
    pub t_observed: f64,
    pub p: f64,
    pub iterations: usize,
}

const PERMUTATION_BLOCK: usize = 256;

/// Two-sample label-permutation test on `|t|` (Welch). Permutations run in
/// fixed blocks, each on its own ChaCha stream, so the result depends only
/// on `seed` and not on the thread count.
pub fn permutation_t_test(a: &[f64], b: &[f64], iterations: usize, seed: u64) -> Result<PermutationTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InvalidParameter("each sample needs at least 2 values".into()));
    }
    if iterations == 0 {
        return Err(Error::InvalidParameter("iterations must be positive".into()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite sample value".into()));
    }
    let t_observed = welch_t(a, b);
    // sorted pool and a split at the smaller size make p independent of argument order
    let mut pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    pooled.sort_by(f64::total_cmp);
    if pooled.iter().all(|&v| v == pooled[0]) {
        return Ok(PermutationTest {
            t_observed,
            p: 1.0,
            iterations,
        });
    }
    let threshold = t_observed.abs();
    let na = a.len().min(b.len());
    let blocks = iterations.div_ceil(PERMUTATION_BLOCK);
    let hits: usize = (0..blocks)
        .into_par_iter()
        .map(|block| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(block as u64);
            let mut work = pooled.clone();
            let todo = PERMUTATION_BLOCK.min(iterations - block * PERMUTATION_BLOCK);
            (0..todo)
                .filter(|_| {
                    work.shuffle(&mut rng);
                    let (pa, pb) = work.split_at(na);
                    welch_t(pa, pb).abs() >= threshold
                })
                .count()
        })
        .sum();
    Ok(PermutationTest {
        t_observed,
        p: (1 + hits) as f64 / (1 + iterations) as f64,
        iterations,
    })
}

/// Benjamini-Hochberg step-up adjusted p-values, in input order.
pub fn bh_fdr(pvals: &[f64]) -> Result<Vec<f64>> {
    if let Some(p) = pvals.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidParameter(format!("p-value {p} outside [0, 1]")));
    }
    let m = pvals.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| pvals[i].total_cmp(&pvals[j]));
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for (rank, &i) in order.iter().enumerate().rev() {
        // exact value is never below p; the max absorbs rounding in p * m / m
        running = running.min(pvals[i] * m as f64 / (rank + 1) as f64).max(pvals[i]);
        adjusted[i] = running;
    }
    Ok(adjusted)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Pearson correlation; 0 when `y` is constant.
    pub r: f64,
}

/// Ordinary least squares `y = slope * x + intercept`.
pub fn linear_regression(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() {
        return Err(Error::shape(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(Error::InvalidParameter("regression needs at least 2 points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
        sxy += (a - mx) * (b - my);
    }
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("x has zero variance".into()));
    }
    let slope = sxy / sxx;
    let r = if syy == 0.0 { 0.0 } else { sxy / (sxx * syy).sqrt() };
    Ok(LinearFit {
        slope,
        intercept: my - slope * mx,
        r,
    })
}
