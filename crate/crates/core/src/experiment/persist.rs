//! Report files: JSON (full structure), CSV (one row per checkpoint and layer)
//! and per-metric TSV plot tables.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::run::NcReport;
use super::trend::MetricKind;
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "epoch,layer,nc1,nc2_norms,nc2_angles,nc4,train_error";

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn report_to_csv(report: &NcReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for cp in &report.checkpoints {
        for m in &cp.layers {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                cp.epoch,
                m.layer,
                fmt_real(m.nc1),
                fmt_real(m.nc2_norms),
                fmt_real(m.nc2_angles),
                fmt_real(m.nc4),
                fmt_real(cp.train_error)
            );
        }
    }
    out
}

pub fn report_to_json(report: &NcReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(report)?)
}

pub fn write_report(dir: &Path, report: &NcReport) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let json = dir.join("report.json");
    fs::write(&json, report_to_json(report)?).map_err(|e| Error::io(&json, e))?;
    let csv = dir.join("report.csv");
    fs::write(&csv, report_to_csv(report)).map_err(|e| Error::io(&csv, e))?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<NcReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let report: NcReport =
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
    validate_report(&report).map_err(|e| Error::format(path, e.to_string()))?;
    Ok(report)
}

/// Epochs strictly increasing, same layer count everywhere, at least one checkpoint.
pub fn validate_report(report: &NcReport) -> Result<()> {
    let first = report
        .checkpoints
        .first()
        .ok_or_else(|| Error::InvalidArgument("report has no checkpoints".into()))?;
    if report.checkpoints.windows(2).any(|w| w[0].epoch >= w[1].epoch) {
        return Err(Error::InvalidArgument("checkpoint epochs are not strictly increasing".into()));
    }
    let layers = first.layers.len();
    if report.checkpoints.iter().any(|c| c.layers.len() != layers) {
        return Err(Error::InvalidArgument("layer count varies across checkpoints".into()));
    }
    Ok(())
}

/// One TSV table per metric: a `layer` column, then one column per
/// checkpoint epoch.
pub fn plot_tables(report: &NcReport) -> Vec<(MetricKind, String)> {
    MetricKind::ALL
        .iter()
        .map(|&kind| {
            let mut t = String::from("layer");
            for cp in &report.checkpoints {
                let _ = write!(t, "\tepoch_{}", cp.epoch);
            }
            t.push('\n');
            let layers = report.checkpoints.first().map_or(0, |c| c.layers.len());
            for k in 0..layers {
                let _ = write!(t, "{}", report.checkpoints[0].layers[k].layer);
                for cp in &report.checkpoints {
                    let _ = write!(t, "\t{}", fmt_real(kind.of(&cp.layers[k])));
                }
                t.push('\n');
            }
            (kind, t)
        })
        .collect()
}
