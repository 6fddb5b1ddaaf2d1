//! Labeled datasets: IDX ingestion, per-class rebalancing, normalization and
//! a synthetic Gaussian mixture with simplex-arranged class means.

mod idx;
mod synth;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub use idx::{load_idx, parse_idx, IdxArray};
pub use synth::{simplex_vertices, synthesize, SyntheticSpec};

/// Flattened inputs with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    /// `N × input_dim`
    pub inputs: Matrix,
    pub labels: Vec<usize>,
    pub class_count: usize,
}

impl LabeledDataset {
    pub fn new(inputs: Matrix, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if inputs.rows() != labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} input rows but {} labels",
                inputs.rows(),
                labels.len()
            )));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::LabelOutOfRange {
                label,
                classes: class_count,
            });
        }
        Ok(Self {
            inputs,
            labels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

/// Uniform subsample of exactly `per_class_n` samples from every class,
/// without replacement. Output is class-major, original order within a class.
pub fn rebalance(ds: &LabeledDataset, per_class_n: usize, seed: u64) -> Result<LabeledDataset> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.class_count];
    for (i, &l) in ds.labels.iter().enumerate() {
        by_class[l].push(i);
    }
    if let Some((c, members)) = by_class.iter().enumerate().find(|(_, m)| m.len() < per_class_n) {
        return Err(Error::InvalidArgument(format!(
            "class {c} has {} samples, {per_class_n} requested",
            members.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = Vec::with_capacity(per_class_n * ds.class_count);
    let mut labels = Vec::with_capacity(per_class_n * ds.class_count);
    for (c, members) in by_class.iter().enumerate() {
        let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, members.len(), per_class_n)
            .into_iter()
            .map(|k| members[k])
            .collect();
        picked.sort_unstable();
        keep.extend_from_slice(&picked);
        labels.extend(std::iter::repeat_n(c, per_class_n));
    }
    LabeledDataset::new(ds.inputs.select_rows(&keep), labels, ds.class_count)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum NormalizeMode {
    /// Standardize every input dimension separately.
    #[default]
    PerDimension,
    /// One mean and one std over all entries.
    Global,
}

/// Means and standard deviations that were removed; one entry per dimension
/// (repeated in global mode).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Dimensions whose std falls below this are only centered.
const DEGENERATE_STD: f64 = 1e-12;

pub fn normalize(ds: &LabeledDataset, mode: NormalizeMode) -> Result<(LabeledDataset, NormalizationStats)> {
    let (n, p) = ds.inputs.shape();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("normalization needs N >= 2, got {n}")));
    }
    let (mean, std) = match mode {
        NormalizeMode::PerDimension => {
            let mut mean = vec![0.0; p];
            for row in ds.inputs.row_iter() {
                for (m, v) in mean.iter_mut().zip(row) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= n as f64);
            let mut var = vec![0.0; p];
            for row in ds.inputs.row_iter() {
                for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                    *s += (v - m) * (v - m);
                }
            }
            let std = var.into_iter().map(|s| (s / n as f64).sqrt()).collect();
            (mean, std)
        }
        NormalizeMode::Global => {
            let all = ds.inputs.as_slice();
            let m = all.iter().sum::<f64>() / all.len() as f64;
            let s = (all.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / all.len() as f64).sqrt();
            (vec![m; p], vec![s; p])
        }
    };
    let mut inputs = ds.inputs.clone();
    for i in 0..n {
        for ((v, m), s) in inputs.row_mut(i).iter_mut().zip(&mean).zip(&std) {
            *v -= m;
            if *s >= DEGENERATE_STD {
                *v /= s;
            }
        }
    }
    Ok((
        LabeledDataset {
            inputs,
            labels: ds.labels.clone(),
            class_count: ds.class_count,
        },
        NormalizationStats { mean, std },
    ))
}
