//! Grids of runs and their CSV tables.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{BenchmarkConfig, SuiteConfig};
use crate::error::Result;
use crate::run::run_benchmark;

/// One `(objective, target, seed)` cell. Failed cells keep their row with
/// NaN estimates and the error text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub objective: String,
    #[serde(rename = "K")]
    pub k: usize,
    pub nu: f64,
    pub target_bits: f64,
    pub seed: u64,
    pub final_bits: f64,
    pub err_bits: f64,
    pub wall_s: f64,
    pub error: String,
}

/// Seed aggregate for one `(objective, target)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub objective: String,
    pub target_bits: f64,
    pub runs: usize,
    pub failed: usize,
    pub mean_bits: f64,
    pub std_bits: f64,
    pub mean_abs_err_bits: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SuiteResult {
    pub rows: Vec<RunRow>,
    pub aggregates: Vec<AggregateRow>,
}

fn run_cell(label: &str, config: &BenchmarkConfig) -> RunRow {
    let mut row = RunRow {
        objective: label.to_string(),
        k: config.batch_size.saturating_sub(1),
        nu: config.objective.nu,
        target_bits: config.target_mi_bits,
        seed: config.seed,
        final_bits: f64::NAN,
        err_bits: f64::NAN,
        wall_s: 0.0,
        error: String::new(),
    };
    match run_benchmark(config) {
        Ok(report) => {
            row.final_bits = report.final_mi_bits;
            row.err_bits = report.final_mi_bits - report.ground_truth_bits;
            row.wall_s = report.wall_time_s;
        }
        Err(e) => {
            log::warn!("{label} target {} seed {}: {e}", config.target_mi_bits, config.seed);
            row.error = e.to_string();
        }
    }
    row
}

/// Runs every cell (in parallel across cells) and aggregates over seeds.
pub fn run_cells(cells: &[(String, BenchmarkConfig)]) -> SuiteResult {
    let rows: Vec<RunRow> = cells.par_iter().map(|(label, c)| run_cell(label, c)).collect();
    let aggregates = aggregate(&rows);
    SuiteResult { rows, aggregates }
}

pub fn run_suite(suite: &SuiteConfig) -> SuiteResult {
    run_cells(&suite.cells())
}

/// Groups rows by `(objective, target_bits)` in first-seen order.
pub fn aggregate(rows: &[RunRow]) -> Vec<AggregateRow> {
    let mut out: Vec<AggregateRow> = Vec::new();
    let mut groups: Vec<Vec<&RunRow>> = Vec::new();
    for row in rows {
        match out.iter().position(|a| a.objective == row.objective && a.target_bits == row.target_bits) {
            Some(i) => groups[i].push(row),
            None => {
                out.push(AggregateRow {
                    objective: row.objective.clone(),
                    target_bits: row.target_bits,
                    runs: 0,
                    failed: 0,
                    mean_bits: f64::NAN,
                    std_bits: f64::NAN,
                    mean_abs_err_bits: f64::NAN,
                });
                groups.push(vec![row]);
            }
        }
    }
    for (agg, group) in out.iter_mut().zip(groups) {
        let ok: Vec<&RunRow> = group.iter().copied().filter(|r| r.error.is_empty()).collect();
        agg.runs = group.len();
        agg.failed = group.len() - ok.len();
        if ok.is_empty() {
            continue;
        }
        let n = ok.len() as f64;
        agg.mean_bits = ok.iter().map(|r| r.final_bits).sum::<f64>() / n;
        agg.std_bits = if ok.len() > 1 {
            (ok.iter().map(|r| (r.final_bits - agg.mean_bits).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        agg.mean_abs_err_bits = ok.iter().map(|r| r.err_bits.abs()).sum::<f64>() / n;
    }
    out
}

fn write_table<T: Serialize>(out: impl Write, headers: &[&str], rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(headers)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub const RUN_COLUMNS: [&str; 9] =
    ["objective", "K", "nu", "target_bits", "seed", "final_bits", "err_bits", "wall_s", "error"];
pub const AGGREGATE_COLUMNS: [&str; 7] =
    ["objective", "target_bits", "runs", "failed", "mean_bits", "std_bits", "mean_abs_err_bits"];

/// Per-run CSV; the header is written even with no rows.
pub fn write_runs_csv(out: impl Write, rows: &[RunRow]) -> Result<()> {
    write_table(out, &RUN_COLUMNS, rows)
}

pub fn write_aggregates_csv(out: impl Write, rows: &[AggregateRow]) -> Result<()> {
    write_table(out, &AGGREGATE_COLUMNS, rows)
}
