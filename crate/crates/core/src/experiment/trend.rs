use serde::{Deserialize, Serialize};

use super::run::NcReport;
use crate::error::{Error, Result};
use crate::metrics::LayerMetrics;

/// Successive relative changes below this count as a plateau.
pub const PLATEAU_REL_CHANGE: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MetricKind {
    Nc1,
    Nc2Norms,
    Nc2Angles,
    Nc4,
}

impl MetricKind {
    pub const ALL: [MetricKind; 4] = [
        MetricKind::Nc1,
        MetricKind::Nc2Norms,
        MetricKind::Nc2Angles,
        MetricKind::Nc4,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Nc1 => "nc1",
            MetricKind::Nc2Norms => "nc2_norms",
            MetricKind::Nc2Angles => "nc2_angles",
            MetricKind::Nc4 => "nc4",
        }
    }

    pub fn of(self, m: &LayerMetrics) -> f64 {
        match self {
            MetricKind::Nc1 => m.nc1,
            MetricKind::Nc2Norms => m.nc2_norms,
            MetricKind::Nc2Angles => m.nc2_angles,
            MetricKind::Nc4 => m.nc4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTrend {
    pub metric: MetricKind,
    pub values: Vec<f64>,
    /// Deepest over shallowest; absent when the shallowest value is zero.
    pub last_to_first_ratio: Option<f64>,
    /// `values[k+1] − values[k]`
    pub deltas: Vec<f64>,
    /// 1-based layer from which every further relative change stays below 10%.
    pub plateau_onset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendSummary {
    pub epoch: usize,
    pub metrics: Vec<MetricTrend>,
}

fn relative_change(from: f64, to: f64) -> f64 {
    let diff = (to - from).abs();
    if diff == 0.0 {
        0.0
    } else {
        diff / from.abs()
    }
}

pub fn describe_series(metric: MetricKind, values: &[f64]) -> MetricTrend {
    let deltas: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    let last_to_first_ratio = match (values.first(), values.last()) {
        (Some(&first), Some(&last)) if first != 0.0 => Some(last / first),
        _ => None,
    };
    // Walk back from the deepest layer while changes stay small.
    let mut onset = values.len().max(1);
    while onset >= 2 && relative_change(values[onset - 2], values[onset - 1]) < PLATEAU_REL_CHANGE {
        onset -= 1;
    }
    MetricTrend {
        metric,
        values: values.to_vec(),
        last_to_first_ratio,
        deltas,
        plateau_onset: onset,
    }
}

/// Layer-depth trends of every metric at the final checkpoint.
pub fn trend_summary(report: &NcReport) -> Result<TrendSummary> {
    let last = report
        .checkpoints
        .last()
        .ok_or_else(|| Error::InvalidArgument("report has no checkpoints".into()))?;
    let metrics = MetricKind::ALL
        .iter()
        .map(|&kind| {
            let values: Vec<f64> = last.layers.iter().map(|m| kind.of(m)).collect();
            describe_series(kind, &values)
        })
        .collect();
    Ok(TrendSummary {
        epoch: last.epoch,
        metrics,
    })
}
