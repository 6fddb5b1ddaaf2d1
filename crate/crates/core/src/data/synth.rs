use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Isotropic Gaussian blobs centered on the vertices of a regular simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub class_count: usize,
    pub input_dim: usize,
    pub per_class: usize,
    /// Distance of every class mean from the origin.
    pub separation: f64,
    pub std: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.class_count < 2 {
            return Err(Error::InvalidConfig("synthetic data needs >= 2 classes".into()));
        }
        if self.input_dim + 1 < self.class_count {
            return Err(Error::InvalidConfig(format!(
                "input_dim {} cannot hold a {}-class simplex (needs >= {})",
                self.input_dim,
                self.class_count,
                self.class_count - 1
            )));
        }
        if self.per_class == 0 {
            return Err(Error::InvalidConfig("per_class must be >= 1".into()));
        }
        if !(self.separation > 0.0 && self.separation.is_finite()) {
            return Err(Error::InvalidConfig("separation radius must be > 0".into()));
        }
        if !(self.std > 0.0 && self.std.is_finite()) {
            return Err(Error::InvalidConfig("std must be > 0".into()));
        }
        Ok(())
    }
}

/// `C` vertices of a centered regular simplex with unit radius, expressed in
/// `C − 1` coordinates (`C × (C−1)`).
///
/// Centered one-hot vectors are projected on the Helmert basis of the
/// sum-zero subspace, then rescaled.
pub fn simplex_vertices(class_count: usize) -> Matrix {
    let c = class_count;
    let mut out = Matrix::zeros(c, c.saturating_sub(1));
    for k in 1..c {
        // Helmert row k: k ones, then −k, then zeros; norm √(k(k+1)).
        let norm = ((k * (k + 1)) as f64).sqrt();
        for v in 0..c {
            let h = match v.cmp(&k) {
                std::cmp::Ordering::Less => 1.0,
                std::cmp::Ordering::Equal => -(k as f64),
                std::cmp::Ordering::Greater => 0.0,
            };
            // the centering term is orthogonal to every Helmert row
            out[(v, k - 1)] = h / norm;
        }
    }
    let radius = ((c as f64 - 1.0) / c as f64).sqrt();
    out.scale(1.0 / radius)
}

pub fn synthesize(spec: &SyntheticSpec) -> Result<LabeledDataset> {
    spec.validate()?;
    let c = spec.class_count;
    let vertices = simplex_vertices(c);
    let noise = Normal::new(0.0, spec.std).expect("validated std");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = c * spec.per_class;
    let mut inputs = Matrix::zeros(n, spec.input_dim);
    let mut labels = Vec::with_capacity(n);
    for class in 0..c {
        for k in 0..spec.per_class {
            let row = inputs.row_mut(class * spec.per_class + k);
            for (j, v) in row.iter_mut().enumerate() {
                let center = if j < c - 1 {
                    spec.separation * vertices[(class, j)]
                } else {
                    0.0
                };
                *v = center + noise.sample(&mut rng);
            }
            labels.push(class);
        }
    }
    LabeledDataset::new(inputs, labels, c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{class_statistics, default_rel_tol};
    use crate::metrics::nc1;

    fn spec(c: usize, dim: usize, std: f64) -> SyntheticSpec {
        SyntheticSpec {
            class_count: c,
            input_dim: dim,
            per_class: 50,
            separation: 3.0,
            std,
            seed: 17,
        }
    }

    #[test]
    fn simplex_vertices_are_equidistant_unit_and_centered() {
        for c in 2..=10 {
            let v = simplex_vertices(c);
            let mut dists = Vec::new();
            for a in 0..c {
                let norm: f64 = v.row(a).iter().map(|x| x * x).sum::<f64>().sqrt();
                assert!((norm - 1.0).abs() < 1e-12);
                for b in (a + 1)..c {
                    let d: f64 = v.row(a).iter().zip(v.row(b)).map(|(x, y)| (x - y).powi(2)).sum();
                    dists.push(d.sqrt());
                }
            }
            let first = dists[0];
            assert!(dists.iter().all(|d| (d - first).abs() < 1e-9));
            for j in 0..c - 1 {
                let s: f64 = (0..c).map(|a| v[(a, j)]).sum();
                assert!(s.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_class_blobs_on_first_axis() {
        let v = simplex_vertices(2);
        assert_eq!(v.shape(), (2, 1));
        assert!((v[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((v[(1, 0)] + 1.0).abs() < 1e-15);
        let ds = synthesize(&spec(2, 2, 1e-9)).unwrap();
        assert!((ds.inputs[(0, 0)] - 3.0).abs() < 1e-6);
        assert!((ds.inputs[(50, 0)] + 3.0).abs() < 1e-6);
        assert!(ds.inputs[(0, 1)].abs() < 1e-6);
    }

    #[test]
    fn determinism_and_shape() {
        let a = synthesize(&spec(4, 8, 1.0)).unwrap();
        assert_eq!(a, synthesize(&spec(4, 8, 1.0)).unwrap());
        assert_eq!(a.inputs.shape(), (200, 8));
        assert_eq!(a.class_counts(), vec![50; 4]);
    }

    #[test]
    fn near_zero_noise_is_collapsed() {
        let ds = synthesize(&spec(5, 6, 1e-9)).unwrap();
        let s = class_statistics(&ds.inputs, &ds.labels, 5).unwrap();
        assert!(nc1(&s, default_rel_tol(6)).unwrap() < 1e-6);
    }

    #[test]
    fn invalid_specs() {
        assert!(synthesize(&spec(5, 3, 1.0)).is_err());
        assert!(synthesize(&spec(3, 3, 0.0)).is_err());
        let mut s = spec(3, 3, 1.0);
        s.separation = -1.0;
        assert!(synthesize(&s).is_err());
    }
}
