//! Serialization of experiment reports: the per-n table as CSV or JSON and
//! the JSON summary with power-law fits.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::Serialize;

use crate::analysis::{
    fit_power_law, fit_power_law_weighted, p_label, Envelope, ExperimentReport, PowerLawFit,
    RatePoint, RateSeries,
};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};

/// Note attached to every bound column: each functional is printed with its
/// unknown constant set to 1.
pub const CONSTANT_NOTE: &str = "bound columns are ×C: the unknown constant is set to 1";

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Column names of the per-n table for the given moment orders.
pub fn table_header(p_values: &[f64]) -> Vec<String> {
    let mut h: Vec<String> = ["n", "s2_hat", "s2_stderr", "d_hat", "dkw_eps"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for &p in p_values {
        let p = p_label(p);
        h.push(format!("v2_p{p}_hat"));
        h.push(format!("v2_p{p}_stderr"));
    }
    h.extend(
        [
            "v2_sup_hat",
            "hall_bound",
            "bolthausen_bound",
            "corollary_bound",
            "theorem3_bound",
        ]
        .iter()
        .map(|s| s.to_string()),
    );
    h
}

/// Numeric rows of the per-n table, in header order after `n`.
pub fn table_rows(report: &ExperimentReport) -> Vec<(usize, Vec<f64>)> {
    report
        .rows
        .iter()
        .map(|r| {
            let mut v = vec![r.s2.value, r.s2.stderr, r.kolmogorov.d_hat, r.kolmogorov.dkw_epsilon];
            for e in &r.v2 {
                v.push(e.estimate.value);
                v.push(e.estimate.stderr);
            }
            v.extend([
                r.v2_sup,
                r.bounds.hall,
                r.bounds.bolthausen,
                r.bounds.corollary,
                r.bounds.theorem3,
            ]);
            (r.n, v)
        })
        .collect()
}

pub fn write_table_csv<W: Write>(report: &ExperimentReport, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(table_header(&report.config.p_values))?;
    for (n, values) in table_rows(report) {
        let mut record = vec![n.to_string()];
        record.extend(values.into_iter().map(fmt_f64));
        out.write_record(&record)?;
    }
    out.flush()?;
    Ok(())
}

/// The same table as a JSON array of objects keyed by column name.
pub fn write_table_json<W: Write>(report: &ExperimentReport, w: W) -> Result<()> {
    let header = table_header(&report.config.p_values);
    let rows: Vec<serde_json::Map<String, serde_json::Value>> = table_rows(report)
        .into_iter()
        .map(|(n, values)| {
            let mut obj = serde_json::Map::new();
            obj.insert(header[0].clone(), n.into());
            for (name, v) in header[1..].iter().zip(values) {
                obj.insert(name.clone(), json_number(v));
            }
            obj
        })
        .collect();
    serde_json::to_writer_pretty(w, &rows)?;
    Ok(())
}

fn json_number(v: f64) -> serde_json::Value {
    serde_json::Number::from_f64(v).map_or(serde_json::Value::Null, serde_json::Value::Number)
}

/// A per-n table read back from CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub n: Vec<usize>,
    /// Column name to values, one per row. Excludes `n`.
    pub columns: BTreeMap<String, Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns.get(name).map(Vec::as_slice)
    }

    /// Points for `value_column`, with standard errors from
    /// `stderr_column` when one is given.
    pub fn rate_points(&self, value_column: &str, stderr_column: Option<&str>) -> Option<Vec<RatePoint>> {
        let values = self.column(value_column)?;
        let stderrs = match stderr_column {
            Some(c) => Some(self.column(c)?),
            None => None,
        };
        Some(
            self.n
                .iter()
                .enumerate()
                .map(|(k, &n)| RatePoint {
                    n,
                    value: values[k],
                    stderr: stderrs.map_or(0.0, |s| s[k]),
                })
                .collect(),
        )
    }
}

pub fn read_table_csv<R: Read>(r: R) -> Result<Table> {
    let mut reader = csv::Reader::from_reader(r);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header.first().map(String::as_str) != Some("n") {
        return Err(Error::arg("table", "first column must be `n`"));
    }
    let mut n = Vec::new();
    let mut columns: BTreeMap<String, Vec<f64>> =
        header[1..].iter().map(|h| (h.clone(), Vec::new())).collect();
    for record in reader.records() {
        let record = record?;
        let bad = |field: &str| Error::arg("table", format!("unparsable value `{field}`"));
        n.push(record[0].parse().map_err(|_| bad(&record[0]))?);
        for (name, field) in header[1..].iter().zip(record.iter().skip(1)) {
            let v: f64 = field.parse().map_err(|_| bad(field))?;
            columns.get_mut(name).expect("header column").push(v);
        }
    }
    Ok(Table { header, n, columns })
}

/// Columns that carry a statistic worth fitting, paired with their
/// standard-error column.
fn fit_columns(table: &Table) -> Vec<(String, String, Option<String>)> {
    table.header[1..]
        .iter()
        .filter(|h| !h.ends_with("_stderr") && h.as_str() != "dkw_eps")
        .map(|h| {
            // `d_hat` keeps its suffix; the other statistics drop it.
            let stem = match h.as_str() {
                "d_hat" => h.clone(),
                _ => h.strip_suffix("_hat").unwrap_or(h).to_string(),
            };
            let stderr = format!("{stem}_stderr");
            let stderr = table.columns.contains_key(&stderr).then_some(stderr);
            (stem, h.clone(), stderr)
        })
        .collect()
}

/// Fits a power law to every statistic column of a table. Columns with a
/// nonpositive entry, or without the standard errors a weighted fit needs,
/// map to `None`.
pub fn fit_table(table: &Table, weighted: bool) -> BTreeMap<String, Option<PowerLawFit>> {
    fit_columns(table)
        .into_iter()
        .map(|(stem, value, stderr)| {
            let fit = table
                .rate_points(&value, stderr.as_deref())
                .and_then(|pts| RateSeries::new(stem.clone(), pts).ok())
                .and_then(|s| {
                    if weighted {
                        fit_power_law_weighted(&s).ok()
                    } else {
                        fit_power_law(&s).ok()
                    }
                });
            (stem, fit)
        })
        .collect()
}

/// The JSON summary written next to the per-n table.
#[derive(Clone, Debug, Serialize)]
pub struct Summary<'a> {
    pub kernel: String,
    /// The run's config without the worker count, which cannot affect
    /// results.
    pub config: ExperimentConfig,
    pub n_grid: Vec<usize>,
    pub fits: BTreeMap<String, Option<PowerLawFit>>,
    /// `<stem>_slope` for every fitted statistic, for quick lookup.
    pub slopes: BTreeMap<String, Option<f64>>,
    pub expected_slopes: &'a BTreeMap<String, f64>,
    pub envelope: Option<Envelope>,
    pub d_hat_scaled: Vec<f64>,
    pub bound_constant: &'static str,
}

impl<'a> Summary<'a> {
    pub fn new(report: &'a ExperimentReport) -> Self {
        let exponent = report.envelope.map_or(0.5, |e| e.exponent);
        Summary {
            kernel: report.config.kernel.label(),
            config: ExperimentConfig {
                threads: None,
                ..report.config.clone()
            },
            n_grid: report.rows.iter().map(|r| r.n).collect(),
            fits: report.fits.clone(),
            slopes: report
                .fits
                .iter()
                .map(|(k, f)| (format!("{k}_slope"), f.map(|f| f.slope)))
                .collect(),
            expected_slopes: &report.expected_slopes,
            envelope: report.envelope,
            d_hat_scaled: report
                .rows
                .iter()
                .map(|r| r.kolmogorov.d_hat * (r.n as f64).powf(exponent))
                .collect(),
            bound_constant: CONSTANT_NOTE,
        }
    }
}

pub fn write_summary_json<W: Write>(report: &ExperimentReport, w: W) -> Result<()> {
    serde_json::to_writer_pretty(w, &Summary::new(report))?;
    Ok(())
}
