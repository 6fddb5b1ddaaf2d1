//! The four per-layer collapse quantities.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{class_statistics, default_rel_tol, svd, ClassStatistics, Matrix};

/// Negative NC1 values down to this are rounding noise and are clamped to zero.
const NC1_NEGATIVE_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerMetrics {
    /// 1-based depth of the hidden layer.
    pub layer: usize,
    pub nc1: f64,
    pub nc2_norms: f64,
    pub nc2_angles: f64,
    pub nc4: f64,
}

/// Within-class variability relative to between-class spread:
/// `Tr(Σ_B⁺ Σ_W) / C`.
///
/// `Σ_B = MᵀM / C` with `M` the centered class means, so `Σ_B⁺` comes from
/// the SVD of `M`: `Σ_B⁺ = C · Σ_k v_k v_kᵀ / s_k²`. Factoring `M` instead of
/// `Σ_B` halves the exponent of the condition number. Eigenvalues of `Σ_B`
/// with `λ ≤ rel_tol · λ_max` (equivalently `s² ≤ rel_tol · s_max²`) are
/// dropped.
pub fn nc1(stats: &ClassStatistics, rel_tol: f64) -> Result<f64> {
    if !(rel_tol > 0.0) {
        return Err(Error::InvalidArgument(format!("rel_tol must be > 0, got {rel_tol}")));
    }
    let dec = svd(&stats.centered_means())?;
    let s_max = dec.singular_values.first().copied().unwrap_or(0.0);
    let cutoff = rel_tol * s_max * s_max;
    let p = stats.dim;
    let mut value = 0.0;
    for (k, &s) in dec.singular_values.iter().enumerate() {
        let s2 = s * s;
        if s2 <= cutoff || s2 == 0.0 {
            continue;
        }
        let v = dec.vt.row(k);
        // v_kᵀ Σ_W v_k
        let mut quad = 0.0;
        for i in 0..p {
            let w = stats.sigma_w.row(i);
            let wv: f64 = w.iter().zip(v).map(|(a, b)| a * b).sum();
            quad += v[i] * wv;
        }
        value += quad / s2;
    }
    if value < -NC1_NEGATIVE_SLACK || !value.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "nc1 evaluated to {value}; scatter matrices are not PSD"
        )));
    }
    Ok(value.max(0.0))
}

fn centered_norms(stats: &ClassStatistics) -> Vec<f64> {
    let centered = stats.centered_means();
    centered
        .row_iter()
        .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect()
}

/// Coefficient of variation (population std over mean) of the centered
/// class-mean norms.
pub fn nc2_equal_norms(stats: &ClassStatistics) -> Result<f64> {
    if stats.class_count < 2 {
        return Err(Error::InvalidArgument("equal-norms needs at least 2 classes".into()));
    }
    let norms = centered_norms(stats);
    let c = norms.len() as f64;
    let mean = norms.iter().sum::<f64>() / c;
    if mean <= 0.0 {
        return Err(Error::DegenerateClassMeans(
            "all centered class means are zero".into(),
        ));
    }
    let var = norms.iter().map(|n| (n - mean).powi(2)).sum::<f64>() / c;
    Ok(var.sqrt() / mean)
}

/// Mean over unordered class pairs of `|cos(μ_c − μ_G, μ_c' − μ_G) + 1/(C−1)|`.
pub fn nc2_max_angles(stats: &ClassStatistics) -> Result<f64> {
    let c = stats.class_count;
    if c < 2 {
        return Err(Error::InvalidArgument("max-angles needs at least 2 classes".into()));
    }
    let centered = stats.centered_means();
    let norms = centered_norms(stats);
    if let Some(k) = norms.iter().position(|&n| n <= 0.0) {
        return Err(Error::DegenerateClassMeans(format!(
            "class {k} mean coincides with the global mean"
        )));
    }
    let shift = 1.0 / (c as f64 - 1.0);
    let mut total = 0.0;
    for a in 0..c {
        for b in (a + 1)..c {
            let dot: f64 = centered
                .row(a)
                .iter()
                .zip(centered.row(b))
                .map(|(x, y)| x * y)
                .sum();
            let cos = dot / (norms[a] * norms[b]);
            total += (cos + shift).abs();
        }
    }
    Ok(total / (c * (c - 1) / 2) as f64)
}

/// Index of the class mean closest to `x`; ties go to the lowest index.
pub fn nearest_class_mean(x: &[f64], class_means: &Matrix) -> usize {
    let mut best = 0;
    let mut best_dist = f64::INFINITY;
    for (c, mean) in class_means.row_iter().enumerate() {
        let d: f64 = x.iter().zip(mean).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best_dist {
            best_dist = d;
            best = c;
        }
    }
    best
}

/// Fraction of samples where the network prediction differs from the
/// nearest-class-mean decision in this layer.
pub fn nc4(activations: &Matrix, class_means: &Matrix, predictions: &[usize]) -> Result<f64> {
    if activations.rows() != predictions.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} activation rows but {} predictions",
            activations.rows(),
            predictions.len()
        )));
    }
    if activations.cols() != class_means.cols() {
        return Err(Error::DimensionMismatch(format!(
            "activations have {} columns, class means {}",
            activations.cols(),
            class_means.cols()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::InvalidArgument("nc4 of an empty layer".into()));
    }
    let mismatches = activations
        .row_iter()
        .zip(predictions)
        .filter(|(row, &pred)| nearest_class_mean(row, class_means) != pred)
        .count();
    Ok(mismatches as f64 / predictions.len() as f64)
}

/// Random subset of activation coordinates kept for analysis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoordinateSubsample {
    pub cap: usize,
    pub seed: u64,
    /// Strictly increasing.
    pub indices: Vec<usize>,
}

impl CoordinateSubsample {
    pub fn is_identity(&self, dim: usize) -> bool {
        self.indices.len() == dim
    }
}

pub fn subsample_coordinates(dim: usize, cap: usize, seed: u64) -> Result<CoordinateSubsample> {
    if cap == 0 {
        return Err(Error::InvalidArgument("coordinate cap must be >= 1".into()));
    }
    let indices = if dim <= cap {
        (0..dim).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = rand::seq::index::sample(&mut rng, dim, cap).into_vec();
        idx.sort_unstable();
        idx
    };
    Ok(CoordinateSubsample { cap, seed, indices })
}

/// Knobs shared by every layer analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    /// Maximum number of coordinates kept per layer.
    pub coord_cap: usize,
    pub seed: u64,
    /// Pseudoinverse cutoff; `None` means `dim · ε`.
    pub rel_tol: Option<f64>,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            coord_cap: 2048,
            seed: 0,
            rel_tol: None,
        }
    }
}

/// Subsamples coordinates, builds class statistics and evaluates all four
/// metrics for one layer.
pub fn analyze_layer(
    layer: usize,
    activations: &Matrix,
    labels: &[usize],
    predictions: &[usize],
    class_count: usize,
    options: &AnalysisOptions,
) -> Result<LayerMetrics> {
    if class_count < 2 {
        return Err(Error::InvalidArgument(format!(
            "layer analysis needs at least 2 classes, got {class_count}"
        )));
    }
    if labels.len() != activations.rows() || predictions.len() != activations.rows() {
        return Err(Error::DimensionMismatch(format!(
            "{} activation rows, {} labels, {} predictions",
            activations.rows(),
            labels.len(),
            predictions.len()
        )));
    }
    let selection = subsample_coordinates(activations.cols(), options.coord_cap, options.seed)?;
    if selection.is_identity(activations.cols()) {
        analyze_selected(layer, activations, labels, predictions, class_count, options.rel_tol)
    } else {
        let h = activations.select_columns(&selection.indices);
        analyze_selected(layer, &h, labels, predictions, class_count, options.rel_tol)
    }
}

/// The four metrics on activations that are already restricted to the
/// analyzed coordinates.
pub fn analyze_selected(
    layer: usize,
    activations: &Matrix,
    labels: &[usize],
    predictions: &[usize],
    class_count: usize,
    rel_tol: Option<f64>,
) -> Result<LayerMetrics> {
    if class_count < 2 {
        return Err(Error::InvalidArgument(format!(
            "layer analysis needs at least 2 classes, got {class_count}"
        )));
    }
    if let Some(&p) = predictions.iter().find(|&&p| p >= class_count) {
        return Err(Error::LabelOutOfRange {
            label: p,
            classes: class_count,
        });
    }
    let stats = class_statistics(activations, labels, class_count)?;
    let rel_tol = rel_tol.unwrap_or_else(|| default_rel_tol(stats.dim));
    Ok(LayerMetrics {
        layer,
        nc1: nc1(&stats, rel_tol)?,
        nc2_norms: nc2_equal_norms(&stats)?,
        nc2_angles: nc2_max_angles(&stats)?,
        nc4: nc4(activations, &stats.class_means, predictions)?,
    })
}
