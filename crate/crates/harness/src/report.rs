//! Per-trial and aggregate CSV reports.

use std::fs::{self, File};
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::experiment::ExperimentReport;

pub const TRIALS_FILE: &str = "trials.csv";
pub const AGGREGATE_FILE: &str = "aggregate.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub environment: String,
    pub method: String,
    #[serde(rename = "T")]
    pub temperature: f64,
    #[serde(rename = "K")]
    pub users: usize,
    pub alpha: f64,
    pub trial: usize,
    pub coverage: f64,
    pub inefficiency_raw: f64,
    pub inefficiency_clipped: f64,
    pub n_unbounded: usize,
    pub seed: u64,
    pub correction_median: f64,
    pub correction_min: f64,
}

pub fn trial_rows(report: &ExperimentReport) -> Vec<TrialRow> {
    report
        .records
        .iter()
        .map(|r| TrialRow {
            environment: report.environment.clone(),
            method: r.method.to_string(),
            temperature: report.temperature,
            users: report.users,
            alpha: report.alpha,
            trial: r.trial,
            coverage: r.coverage,
            inefficiency_raw: r.inefficiency_raw,
            inefficiency_clipped: r.inefficiency_clipped,
            n_unbounded: r.n_unbounded,
            seed: r.seed,
            correction_median: r.correction_median,
            correction_min: r.correction_min,
        })
        .collect()
}

pub fn write_trials<W: io::Write>(rows: &[TrialRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trials<R: io::Read>(input: R) -> Result<Vec<TrialRow>> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<std::result::Result<Vec<TrialRow>, _>>()?)
}

/// Box-plot summary: quartiles by linear interpolation, whiskers at the most
/// extreme data within 1.5 IQR of the box, never inside the box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxStats {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub whisker_lo: f64,
    pub whisker_hi: f64,
    pub outlier_count: usize,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let (i, frac) = (h.floor() as usize, h - h.floor());
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

impl BoxStats {
    /// NaN entries are skipped; `None` if nothing is left.
    pub fn from_values(values: &[f64]) -> Option<Self> {
        let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let q1 = quantile_sorted(&v, 0.25);
        let q3 = quantile_sorted(&v, 0.75);
        let iqr = q3 - q1;
        let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
        let whisker_lo = v.iter().copied().find(|&x| x >= lo_fence).map_or(q1, |x| x.min(q1));
        let whisker_hi = v.iter().rev().copied().find(|&x| x <= hi_fence).map_or(q3, |x| x.max(q3));
        Some(Self {
            n: v.len(),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            median: quantile_sorted(&v, 0.5),
            q1,
            q3,
            whisker_lo,
            whisker_hi,
            outlier_count: v.iter().filter(|&&x| x < whisker_lo || x > whisker_hi).count(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub environment: String,
    pub method: String,
    #[serde(rename = "T")]
    pub temperature: f64,
    #[serde(rename = "K")]
    pub users: usize,
    pub alpha: f64,
    pub metric: String,
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub whisker_lo: f64,
    pub whisker_hi: f64,
    pub outlier_count: usize,
}

pub const METRICS: [&str; 3] = ["coverage", "inefficiency_raw", "inefficiency_clipped"];

fn metric_value(row: &TrialRow, metric: &str) -> f64 {
    match metric {
        "coverage" => row.coverage,
        "inefficiency_raw" => row.inefficiency_raw,
        "inefficiency_clipped" => row.inefficiency_clipped,
        _ => unreachable!("unknown metric"),
    }
}

/// One row per configuration, method and metric, in order of first appearance.
pub fn aggregate(rows: &[TrialRow]) -> Vec<AggregateRow> {
    let key = |r: &TrialRow| (r.environment.clone(), r.method.clone(), r.temperature.to_bits(), r.users, r.alpha.to_bits());
    let mut groups: Vec<(_, Vec<&TrialRow>)> = Vec::new();
    for r in rows {
        let k = key(r);
        match groups.iter_mut().find(|(g, _)| *g == k) {
            Some((_, members)) => members.push(r),
            None => groups.push((k, vec![r])),
        }
    }
    let mut out = Vec::new();
    for (_, members) in groups {
        let first = members[0];
        for metric in METRICS {
            let values: Vec<f64> = members.iter().map(|r| metric_value(r, metric)).collect();
            let stats = BoxStats::from_values(&values).unwrap_or(BoxStats {
                n: 0,
                mean: f64::NAN,
                median: f64::NAN,
                q1: f64::NAN,
                q3: f64::NAN,
                whisker_lo: f64::NAN,
                whisker_hi: f64::NAN,
                outlier_count: 0,
            });
            out.push(AggregateRow {
                environment: first.environment.clone(),
                method: first.method.clone(),
                temperature: first.temperature,
                users: first.users,
                alpha: first.alpha,
                metric: metric.to_string(),
                n: stats.n,
                mean: stats.mean,
                median: stats.median,
                q1: stats.q1,
                q3: stats.q3,
                whisker_lo: stats.whisker_lo,
                whisker_hi: stats.whisker_hi,
                outlier_count: stats.outlier_count,
            });
        }
    }
    out
}

pub fn write_aggregate<W: io::Write>(rows: &[AggregateRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_aggregate<R: io::Read>(input: R) -> Result<Vec<AggregateRow>> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<std::result::Result<Vec<AggregateRow>, _>>()?)
}

/// Writes `trials.csv` and `aggregate.csv` into `dir`, creating it if needed.
pub fn emit_report(report: &ExperimentReport, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    if report.records.is_empty() {
        return Err(HarnessError::Report("report has no trials".into()));
    }
    fs::create_dir_all(dir)?;
    let rows = trial_rows(report);
    let trials = dir.join(TRIALS_FILE);
    let agg = dir.join(AGGREGATE_FILE);
    write_trials(&rows, File::create(&trials)?)?;
    write_aggregate(&aggregate(&rows), File::create(&agg)?)?;
    Ok((trials, agg))
}
