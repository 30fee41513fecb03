//! CSV output of result tables.
//!
//! The main file has one row per (record, metric, statistic) with columns
//! [`CSV_HEADER`]. Histograms of the last-layer errors go to a companion file
//! with columns [`HIST_HEADER`], one row per bin plus one row counting exact
//! zeros.

use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::experiments::{Record, ResultTable};
use super::stats::ErrorStats;
use crate::error::Result;

pub const CSV_HEADER: [&str; 14] = [
    "experiment",
    "seed",
    "rep_count",
    "precision_mode",
    "precision_value",
    "variant",
    "placement",
    "grid_name",
    "grid_value",
    "layer",
    "metric",
    "stat",
    "value",
    "count_inf",
];

pub const HIST_HEADER: [&str; 15] = [
    "experiment",
    "seed",
    "rep_count",
    "precision_mode",
    "precision_value",
    "variant",
    "placement",
    "grid_name",
    "grid_value",
    "layer",
    "metric",
    "bin",
    "log10_lo",
    "log10_hi",
    "count",
];

/// One row of the main CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub experiment: String,
    pub seed: u64,
    pub rep_count: usize,
    pub precision_mode: String,
    pub precision_value: u32,
    pub variant: String,
    pub placement: String,
    pub grid_name: String,
    pub grid_value: f64,
    pub layer: usize,
    /// `cw` (componentwise) or `nw` (normwise).
    pub metric: String,
    /// `mean`, `median`, `p5`, `p95`, `std` or `bound_mean`.
    pub stat: String,
    pub value: f64,
    /// Samples excluded as non-finite; for `bound_mean`, instances where the
    /// bound was not applicable.
    pub count_inf: usize,
}

/// One row of the histogram file. `bin` is the bin index, or `zero` for the
/// count of exact zeros, which have no bin edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistRow {
    pub experiment: String,
    pub seed: u64,
    pub rep_count: usize,
    pub precision_mode: String,
    pub precision_value: u32,
    pub variant: String,
    pub placement: String,
    pub grid_name: String,
    pub grid_value: f64,
    pub layer: usize,
    pub metric: String,
    pub bin: String,
    pub log10_lo: Option<f64>,
    pub log10_hi: Option<f64>,
    pub count: usize,
}

fn base_row(table: &ResultTable, r: &Record, metric: &str, stat: &str, value: f64, count_inf: usize) -> CsvRow {
    let spec = &table.spec;
    let attention_only = r.key.placement.is_none();
    CsvRow {
        experiment: spec.which.name().to_string(),
        seed: spec.seed,
        rep_count: spec.reps,
        precision_mode: r.key.precision.mode_name().to_string(),
        precision_value: r.key.precision.precision_value(),
        variant: if attention_only { "none".into() } else { spec.variant.name().into() },
        placement: r.key.placement.map_or("none", |p| p.name()).to_string(),
        grid_name: spec.which.grid_name().to_string(),
        grid_value: r.key.grid_value,
        layer: r.key.layer,
        metric: metric.to_string(),
        stat: stat.to_string(),
        value,
        count_inf,
    }
}

fn stat_values(s: Option<&ErrorStats>) -> [(&'static str, f64); 5] {
    match s {
        Some(s) => [("mean", s.mean), ("median", s.median), ("p5", s.p5), ("p95", s.p95), ("std", s.std)],
        None => [("mean", f64::NAN), ("median", f64::NAN), ("p5", f64::NAN), ("p95", f64::NAN), ("std", f64::NAN)],
    }
}

impl ResultTable {
    /// Rows of the main CSV file in output order.
    pub fn rows(&self) -> Vec<CsvRow> {
        let mut rows = Vec::new();
        for r in &self.records {
            for (stat, v) in stat_values(r.cw.as_ref()) {
                rows.push(base_row(self, r, "cw", stat, v, r.cw_inf));
            }
            if let Some((mean, na)) = r.bound {
                rows.push(base_row(self, r, "cw", "bound_mean", mean, na));
            }
            for (stat, v) in stat_values(r.nw.as_ref()) {
                rows.push(base_row(self, r, "nw", stat, v, r.nw_inf));
            }
        }
        rows
    }

    /// Histogram rows for the last-layer records.
    pub fn hist_rows(&self) -> Vec<HistRow> {
        let mut rows = Vec::new();
        for r in self.records.iter().filter(|r| r.is_final) {
            for (metric, stats) in [("cw", &r.cw), ("nw", &r.nw)] {
                let Some(stats) = stats else { continue };
                let base = base_row(self, r, metric, "", 0.0, 0);
                let row = |bin: String, lo, hi, count| HistRow {
                    experiment: base.experiment.clone(),
                    seed: base.seed,
                    rep_count: base.rep_count,
                    precision_mode: base.precision_mode.clone(),
                    precision_value: base.precision_value,
                    variant: base.variant.clone(),
                    placement: base.placement.clone(),
                    grid_name: base.grid_name.clone(),
                    grid_value: base.grid_value,
                    layer: base.layer,
                    metric: base.metric.clone(),
                    bin,
                    log10_lo: lo,
                    log10_hi: hi,
                    count,
                };
                let h = &stats.histogram;
                for (i, &c) in h.counts.iter().enumerate() {
                    rows.push(row(i.to_string(), Some(h.edges[i]), Some(h.edges[i + 1]), c));
                }
                rows.push(row("zero".into(), None, None, h.zeros));
            }
        }
        rows
    }
}

fn write_rows<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(File::create(path)?);
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the main CSV file. An empty table gives a header-only file.
pub fn emit_csv(table: &ResultTable, path: &Path) -> Result<()> {
    write_rows(path, &CSV_HEADER, &table.rows())
}

/// Path of the histogram file that accompanies `path`: `<stem>_hist.csv`.
pub fn hist_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}_hist.csv"))
}

pub fn emit_histograms(table: &ResultTable, path: &Path) -> Result<()> {
    write_rows(path, &HIST_HEADER, &table.hist_rows())
}

pub fn read_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<CsvRow>, _>>()?;
    Ok(rows)
}

pub fn read_hist_csv(path: &Path) -> Result<Vec<HistRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<HistRow>, _>>()?;
    Ok(rows)
}
