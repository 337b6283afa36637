use std::path::Path;

use super::{ExperimentOutput, TrialRecord};
use crate::error::Result;
use crate::metrics::TraceRow;
use crate::optimizer::Algorithm;

/// Metric columns shared by the long-format and summary CSVs.
pub const TRACE_COLUMNS: [&str; 10] = [
    "sd_node1",
    "sd_max",
    "rho_hat",
    "psi_hat",
    "max_task_err",
    "comm_s_cum",
    "compute_s_cum",
    "rounds_cum",
    "comm_s_cum_gd",
    "compute_s_cum_gd",
];

fn metric_columns() -> &'static [&'static str] {
    &TRACE_COLUMNS
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn row_values(r: &TraceRow) -> [f64; 10] {
    [
        r.sd_node1,
        r.sd_max,
        r.rho_hat,
        r.psi_hat,
        r.max_task_err,
        r.comm_s_cum,
        r.compute_s_cum,
        r.rounds_cum as f64,
        r.comm_s_cum_gd,
        r.compute_s_cum_gd,
    ]
}

/// Per-iteration means over the trials that reached that iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub algorithm: Algorithm,
    pub iter: usize,
    pub n_trials: usize,
    /// Means in `TRACE_COLUMNS` order.
    pub means: [f64; 10],
}

impl SummaryRow {
    pub fn mean(&self, column: &str) -> Option<f64> {
        metric_columns()
            .iter()
            .position(|c| *c == column)
            .map(|i| self.means[i])
    }
}

pub fn summarize(records: &[TrialRecord], algorithms: &[Algorithm]) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    for &algorithm in algorithms {
        let rows: Vec<Vec<TraceRow>> = records
            .iter()
            .filter(|r| r.algorithm == algorithm)
            .filter_map(|r| r.trace.as_ref().map(|t| t.rows()))
            .collect();
        let longest = rows.iter().map(Vec::len).max().unwrap_or(0);
        for i in 0..longest {
            let present: Vec<[f64; 10]> = rows.iter().filter_map(|r| r.get(i)).map(row_values).collect();
            let mut means = [0.0; 10];
            for vals in &present {
                for (m, v) in means.iter_mut().zip(vals) {
                    *m += v;
                }
            }
            for m in &mut means {
                *m /= present.len() as f64;
            }
            let iter = rows.iter().find_map(|r| r.get(i)).map_or(i, |r| r.iter);
            out.push(SummaryRow {
                algorithm,
                iter,
                n_trials: present.len(),
                means,
            });
        }
    }
    out
}

pub(crate) fn write_traces(path: &Path, records: &[TrialRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["algorithm", "trial", "iter"];
    header.extend_from_slice(metric_columns());
    w.write_record(&header)?;
    for rec in records {
        let Some(trace) = &rec.trace else { continue };
        for row in trace.rows() {
            let mut fields = vec![
                rec.algorithm.name().to_string(),
                rec.trial.to_string(),
                row.iter.to_string(),
            ];
            for (i, v) in row_values(&row).into_iter().enumerate() {
                fields.push(if i == 7 { row.rounds_cum.to_string() } else { fmt(v) });
            }
            w.write_record(&fields)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn summary_fields(row: &SummaryRow) -> Vec<String> {
    let mut fields = vec![
        row.algorithm.name().to_string(),
        row.iter.to_string(),
        row.n_trials.to_string(),
    ];
    fields.extend(row.means.iter().map(|&v| fmt(v)));
    fields
}

pub(crate) fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["algorithm", "iter", "n_trials"];
    header.extend_from_slice(metric_columns());
    w.write_record(&header)?;
    for row in rows {
        w.write_record(summary_fields(row))?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn write_sweep_summary(path: &Path, axis: &str, results: &[(f64, ExperimentOutput)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["axis", "value", "algorithm", "iter", "n_trials"];
    header.extend_from_slice(metric_columns());
    w.write_record(&header)?;
    for (value, out) in results {
        for row in &out.summary {
            let mut fields = vec![axis.to_string(), value.to_string()];
            fields.extend(summary_fields(row));
            w.write_record(&fields)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn write_aborts(path: &Path, records: &[TrialRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["algorithm", "trial", "reason"])?;
    for rec in records {
        if let Some(reason) = &rec.abort {
            w.write_record([rec.algorithm.name(), &rec.trial.to_string(), reason])?;
        }
    }
    w.flush()?;
    Ok(())
}
