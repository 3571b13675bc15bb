use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Context;
use serde::Serialize;

use super::csv_writer;
use crate::cli::output::{fmt_opt, parse_cell, write_atomic, write_json};
use crate::cli::{CompareArgs, Outcome, RunContext};
use crate::stats::{mean, wilcoxon_signed_rank, PairedSample, WilcoxonMethod};
use crate::{Error, Result};

/// Per-eye metric columns read from an evaluation CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricTable {
    pub columns: Vec<String>,
    pub rows: BTreeMap<String, Vec<Option<f64>>>,
}

impl MetricTable {
    pub fn parse(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let csv_err = |e: csv::Error| Error::Format(e.to_string());
        let headers: Vec<String> = r
            .headers()
            .map_err(csv_err)?
            .iter()
            .map(str::to_string)
            .collect();
        let id_col = headers
            .iter()
            .position(|h| h == "eye_id")
            .ok_or_else(|| Error::Format("missing eye_id column".into()))?;
        let columns: Vec<String> = headers.iter().filter(|h| *h != "eye_id").cloned().collect();
        let mut rows = BTreeMap::new();
        for rec in r.records() {
            let rec = rec.map_err(csv_err)?;
            let id = rec.get(id_col).unwrap_or_default().to_string();
            let values = rec
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != id_col)
                .map(|(_, v)| parse_cell(v))
                .collect::<Result<Vec<_>>>()?;
            if rows.insert(id.clone(), values).is_some() {
                return Err(Error::Format(format!("duplicate eye_id {id}")));
            }
        }
        Ok(Self { columns, rows })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Format(format!("metric column {name:?} not found")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub metric: String,
    pub n: usize,
    /// Pairs dropped because either value was infinite.
    pub n_excluded_inf: usize,
    /// Pairs dropped because either value was n/a.
    pub n_missing: usize,
    pub w_plus: Option<f64>,
    pub statistic: Option<f64>,
    pub p: Option<f64>,
    pub method: Option<WilcoxonMethod>,
    pub degenerate: bool,
    pub mean_a: Option<f64>,
    pub mean_b: Option<f64>,
    pub direction: String,
}

/// Paired two-sided Wilcoxon per metric over the eyes both tables share.
pub fn compare_tables(
    a: &MetricTable,
    b: &MetricTable,
    metrics: &[String],
) -> Result<Vec<CompareRow>> {
    let shared: Vec<&String> = a.rows.keys().filter(|k| b.rows.contains_key(*k)).collect();
    if shared.is_empty() {
        return Err(Error::NoOverlap);
    }
    let mut out = Vec::with_capacity(metrics.len());
    for metric in metrics {
        let (ia, ib) = (a.column(metric)?, b.column(metric)?);
        let (mut xa, mut xb) = (Vec::new(), Vec::new());
        let (mut n_inf, mut n_missing) = (0, 0);
        for id in &shared {
            match (a.rows[*id][ia], b.rows[*id][ib]) {
                (Some(u), Some(v)) if u.is_finite() && v.is_finite() => {
                    xa.push(u);
                    xb.push(v);
                }
                (Some(_), Some(_)) => n_inf += 1,
                _ => n_missing += 1,
            }
        }
        let (ma, mb) = (mean(&xa), mean(&xb));
        let direction = match (ma, mb) {
            (Some(u), Some(v)) if u > v => "mean a > mean b",
            (Some(u), Some(v)) if u < v => "mean a < mean b",
            (Some(_), Some(_)) => "means equal",
            _ => "no pairs",
        };
        let mut row = CompareRow {
            metric: metric.clone(),
            n: xa.len(),
            n_excluded_inf: n_inf,
            n_missing,
            w_plus: None,
            statistic: None,
            p: None,
            method: None,
            degenerate: false,
            mean_a: ma,
            mean_b: mb,
            direction: direction.to_string(),
        };
        if !xa.is_empty() {
            let w = wilcoxon_signed_rank(&PairedSample::new(xa, xb)?);
            row.w_plus = Some(w.w_plus);
            row.statistic = Some(w.statistic);
            row.p = Some(w.p);
            row.method = Some(w.method);
            row.degenerate = w.degenerate;
        }
        out.push(row);
    }
    Ok(out)
}

fn rows_to_csv(rows: &[CompareRow]) -> Result<Vec<u8>> {
    let mut w = csv_writer();
    let csv_err = |e: csv::Error| Error::Format(e.to_string());
    w.write_record([
        "metric",
        "n",
        "n_excluded_inf",
        "n_missing",
        "w_plus",
        "statistic",
        "p",
        "method",
        "degenerate",
        "mean_a",
        "mean_b",
        "direction",
    ])
    .map_err(csv_err)?;
    for r in rows {
        let method = match r.method {
            Some(WilcoxonMethod::Exact) => "exact",
            Some(WilcoxonMethod::NormalApprox) => "normal",
            None => "n/a",
        };
        w.write_record([
            r.metric.clone(),
            r.n.to_string(),
            r.n_excluded_inf.to_string(),
            r.n_missing.to_string(),
            fmt_opt(r.w_plus),
            fmt_opt(r.statistic),
            fmt_opt(r.p),
            method.to_string(),
            r.degenerate.to_string(),
            fmt_opt(r.mean_a),
            fmt_opt(r.mean_b),
            r.direction.clone(),
        ])
        .map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

#[derive(Serialize)]
struct CompareReport<'a> {
    tool_version: &'a str,
    a: String,
    b: String,
    n_shared: usize,
    rows: &'a [CompareRow],
}

pub fn compare(ctx: &RunContext, args: &CompareArgs) -> anyhow::Result<Outcome> {
    let a = MetricTable::load(&args.csv_a)
        .with_context(|| format!("reading {}", args.csv_a.display()))?;
    let b = MetricTable::load(&args.csv_b)
        .with_context(|| format!("reading {}", args.csv_b.display()))?;
    let rows = compare_tables(&a, &b, &args.metrics)?;
    let n_shared = a.rows.keys().filter(|k| b.rows.contains_key(*k)).count();
    write_atomic(ctx.out.join("compare.csv"), &rows_to_csv(&rows)?)?;
    write_json(
        ctx.out.join("compare.json"),
        &CompareReport {
            tool_version: crate::TOOL_VERSION,
            a: args.csv_a.display().to_string(),
            b: args.csv_b.display().to_string(),
            n_shared,
            rows: &rows,
        },
    )?;
    Ok(Outcome::Complete)
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: &str = "eye_id,delta_t,mae,psnr\ne1,1,0.1,20\ne2,1,0.2,inf\ne3,1,0.3,25\ne4,1,0.4,n/a\ne5,1,0.5,30\n";

    #[test]
    fn self_comparison_is_degenerate() {
        let t = MetricTable::parse(A).unwrap();
        let rows = compare_tables(&t, &t, &["mae".into(), "psnr".into()]).unwrap();
        assert!(rows.iter().all(|r| r.p == Some(1.0) && r.degenerate));
        assert_eq!(
            (rows[1].n, rows[1].n_excluded_inf, rows[1].n_missing),
            (3, 1, 1)
        );
    }

    #[test]
    fn strictly_better_five_eyes() {
        let a = MetricTable::parse(A).unwrap();
        let b = MetricTable::parse(&A.replace(",0.", ",1.")).unwrap();
        let rows = compare_tables(&a, &b, &["mae".into()]).unwrap();
        assert_eq!(rows[0].p, Some(0.0625));
        assert_eq!(rows[0].direction, "mean a < mean b");
    }

    #[test]
    fn disjoint_tables() {
        let a = MetricTable::parse(A).unwrap();
        let b = MetricTable::parse("eye_id,mae\nz1,1\n").unwrap();
        assert!(matches!(
            compare_tables(&a, &b, &["mae".into()]),
            Err(Error::NoOverlap)
        ));
    }
}
