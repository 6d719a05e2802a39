//! Benchmark summaries and query curves.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use fba2d_core::metrics::{aggregate, BenchmarkSummary, SampleMetrics, ThresholdOutcome};
use fba2d_core::AttackTrace;

use crate::error::{HarnessError, Result};
use crate::pipeline::{ReportFile, TRACES_DIR};

pub const SUMMARY_CSV: &str = "summary.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const CURVES_CSV: &str = "curves.csv";

pub fn summarize(reports: &ReportFile, thresholds: &[f64]) -> Result<Option<BenchmarkSummary>> {
    if reports.samples.is_empty() {
        return Ok(None);
    }
    // Success is re-derived so thresholds may differ from the attack run's.
    let metrics: Vec<SampleMetrics> = reports
        .samples
        .iter()
        .map(|r| {
            let mut m = r.metrics.clone();
            m.success_at = thresholds
                .iter()
                .map(|&t| ThresholdOutcome {
                    threshold: t,
                    success: r.error.is_none() && m.rmse <= t,
                })
                .collect();
            m
        })
        .collect();
    Ok(Some(aggregate(&metrics, thresholds)?))
}

/// Write `summary.csv` and `summary.json`. An empty report yields a header-only
/// CSV and `{"samples":0,"rows":[]}`.
pub fn write_summary(out: &Path, summary: Option<&BenchmarkSummary>) -> Result<()> {
    fs::create_dir_all(out)?;
    let empty = BenchmarkSummary { samples: 0, rows: Vec::new() };
    let s = summary.unwrap_or(&empty);
    fs::write(out.join(SUMMARY_CSV), s.to_csv())?;
    fs::write(out.join(SUMMARY_JSON), s.to_json() + "\n")?;
    Ok(())
}

/// One row per accepted step of every trace in `dir/traces`, sorted by sample.
pub fn curves_csv(dir: &Path, reports: &ReportFile) -> Result<String> {
    let mut out = String::from("sample,step,queries,delta_l2,rmse\n");
    for r in &reports.samples {
        let path = dir.join(TRACES_DIR).join(format!("{}.jsonl", r.id));
        if !path.exists() {
            continue;
        }
        let text = fs::read_to_string(&path)?;
        let trace = AttackTrace::from_jsonl(&text).map_err(|e| HarnessError::Dataset(format!("{}: {e}", path.display())))?;
        for rec in &trace.records {
            // Trace queries exclude initialization probes.
            let q = rec.queries + r.init_queries;
            writeln!(out, "{},{},{},{},{}", r.id, rec.step, q, rec.delta_l2, rec.rmse).expect("write to String");
        }
    }
    Ok(out)
}
