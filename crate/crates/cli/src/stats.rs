use std::path::Path;

use cowseg::analysis::{bh_fdr, icc_3_1, permutation_t_test, MeasurementTable};
use serde::Serialize;

use crate::{write_text, CliError, CliResult};

const ID_COLUMNS: [&str; 4] = ["subject", "case_id", "id", "name"];

struct Table {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read_table(path: &Path) -> CliResult<Table> {
    let bad = |e: csv::Error| CliError::Validation(format!("{}: {e}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(bad)?;
    let headers = r.headers().map_err(bad)?.iter().map(|h| h.trim().to_string()).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(|f| f.trim().to_string()).collect()))
        .collect::<Result<_, _>>()
        .map_err(bad)?;
    Ok(Table { headers, rows })
}

impl Table {
    fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }
}

fn number(field: &str, row: usize, column: &str) -> CliResult<f64> {
    field
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| CliError::Validation(format!("row {}: `{column}` = `{field}` is not a number", row + 1)))
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    write_text(
        path,
        &(serde_json::to_string_pretty(value).expect("report serializes") + "\n"),
    )
}

#[derive(Serialize)]
struct IccReport {
    icc_3_1: f64,
    subjects: usize,
    scans: usize,
    scan_columns: Vec<String>,
}

pub fn icc(input: &Path, out: &Path) -> CliResult<()> {
    let t = read_table(input)?;
    let cols: Vec<usize> = (0..t.headers.len())
        .filter(|&c| !ID_COLUMNS.contains(&t.headers[c].as_str()))
        .collect();
    let rows = t
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| cols.iter().map(|&c| number(&r[c], i, &t.headers[c])).collect())
        .collect::<CliResult<Vec<Vec<f64>>>>()?;
    let table = MeasurementTable::new(rows)?;
    let report = IccReport {
        icc_3_1: icc_3_1(&table),
        subjects: table.subjects(),
        scans: table.scans(),
        scan_columns: cols.iter().map(|&c| t.headers[c].clone()).collect(),
    };
    println!("ICC(3,1) = {:.6}", report.icc_3_1);
    write_json(out, &report)
}

#[derive(Serialize)]
struct PermReport {
    group_a: String,
    group_b: String,
    n_a: usize,
    n_b: usize,
    t_observed: f64,
    p: f64,
    iterations: usize,
    seed: u64,
}

pub fn permtest(input: &Path, out: &Path, iterations: usize, seed: u64) -> CliResult<()> {
    let t = read_table(input)?;
    let (Some(gc), Some(vc)) = (t.column("group"), t.column("value")) else {
        return Err(CliError::Validation(
            "permtest input needs `group` and `value` columns".into(),
        ));
    };
    let mut groups: Vec<(String, Vec<f64>)> = Vec::new();
    for (i, r) in t.rows.iter().enumerate() {
        let v = number(&r[vc], i, "value")?;
        match groups.iter_mut().find(|(g, _)| *g == r[gc]) {
            Some((_, vals)) => vals.push(v),
            None => groups.push((r[gc].clone(), vec![v])),
        }
    }
    if groups.len() != 2 {
        return Err(CliError::Validation(format!(
            "permtest needs exactly two groups, found {}",
            groups.len()
        )));
    }
    let (b, a) = (groups.pop().expect("two groups"), groups.pop().expect("two groups"));
    let r = permutation_t_test(&a.1, &b.1, iterations, seed)?;
    let report = PermReport {
        n_a: a.1.len(),
        n_b: b.1.len(),
        group_a: a.0,
        group_b: b.0,
        t_observed: r.t_observed,
        p: r.p,
        iterations,
        seed,
    };
    println!("t = {:.6}, p = {}", report.t_observed, report.p);
    write_json(out, &report)
}

#[derive(Serialize)]
struct FdrRow {
    #[serde(skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    p: f64,
    adjusted: f64,
}

pub fn fdr(input: &Path, out: &Path) -> CliResult<()> {
    let t = read_table(input)?;
    let pc = t
        .column("p")
        .ok_or_else(|| CliError::Validation("fdr input needs a `p` column".into()))?;
    let nc = t.column("name");
    let p = t
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| number(&r[pc], i, "p"))
        .collect::<CliResult<Vec<_>>>()?;
    let adjusted = bh_fdr(&p)?;
    let rows: Vec<FdrRow> = t
        .rows
        .iter()
        .zip(p.iter().zip(&adjusted))
        .map(|(r, (&p, &adjusted))| FdrRow {
            name: nc.map(|c| r[c].clone()),
            p,
            adjusted,
        })
        .collect();
    write_json(out, &rows)
}
