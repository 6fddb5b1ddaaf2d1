//! Two-pass class statistics.
//!
//! The first pass collects per-class counts and sums; the second pass
//! accumulates within-class scatter around the frozen class means. Between-class
//! scatter is formed from the class means at finalization.

use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};

/// Per-layer global mean, class means, pooled within-class covariance and
/// between-class covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStatistics {
    pub dim: usize,
    pub class_count: usize,
    pub class_sizes: Vec<usize>,
    pub global_mean: Vec<f64>,
    /// `class_count × dim`
    pub class_means: Matrix,
    pub sigma_w: Matrix,
    pub sigma_b: Matrix,
}

impl ClassStatistics {
    /// Class means with the global mean subtracted, one row per class.
    pub fn centered_means(&self) -> Matrix {
        let mut m = self.class_means.clone();
        for c in 0..self.class_count {
            for (v, g) in m.row_mut(c).iter_mut().zip(&self.global_mean) {
                *v -= g;
            }
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pass {
    Means,
    Scatter,
}

#[derive(Debug, Clone)]
pub struct StreamingClassAccumulator {
    class_count: usize,
    dim: usize,
    pass: Pass,
    counts: Vec<usize>,
    sums: Matrix,
    /// Frozen once the scatter pass starts.
    means: Matrix,
    scatter_counts: Vec<usize>,
    /// Upper triangle is authoritative until finalize.
    scatter: Matrix,
}

impl StreamingClassAccumulator {
    pub fn new(class_count: usize, dim: usize) -> Result<Self> {
        if class_count == 0 || dim == 0 {
            return Err(Error::InvalidArgument(format!(
                "accumulator needs class_count >= 1 and dim >= 1, got {class_count} and {dim}"
            )));
        }
        Ok(Self {
            class_count,
            dim,
            pass: Pass::Means,
            counts: vec![0; class_count],
            sums: Matrix::zeros(class_count, dim),
            means: Matrix::zeros(class_count, dim),
            scatter_counts: vec![0; class_count],
            scatter: Matrix::zeros(dim, dim),
        })
    }

    pub fn pass(&self) -> Pass {
        self.pass
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    fn check_batch(&self, batch: &Matrix, labels: &[usize]) -> Result<()> {
        if batch.cols() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "batch has {} columns, accumulator dim is {}",
                batch.cols(),
                self.dim
            )));
        }
        if batch.rows() != labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} rows but {} labels",
                batch.rows(),
                labels.len()
            )));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= self.class_count) {
            return Err(Error::LabelOutOfRange {
                label,
                classes: self.class_count,
            });
        }
        Ok(())
    }

    /// Feeds a batch into whichever pass is active.
    pub fn accumulate(&mut self, batch: &Matrix, labels: &[usize]) -> Result<()> {
        self.check_batch(batch, labels)?;
        match self.pass {
            Pass::Means => {
                for (row, &c) in batch.row_iter().zip(labels) {
                    self.counts[c] += 1;
                    for (s, v) in self.sums.row_mut(c).iter_mut().zip(row) {
                        *s += v;
                    }
                }
            }
            Pass::Scatter => {
                let mut centered = vec![0.0; self.dim];
                for (row, &c) in batch.row_iter().zip(labels) {
                    self.scatter_counts[c] += 1;
                    for ((d, v), m) in centered.iter_mut().zip(row).zip(self.means.row(c)) {
                        *d = v - m;
                    }
                    add_outer_upper(&mut self.scatter, &centered);
                }
            }
        }
        Ok(())
    }

    /// Freezes the class means and switches to the scatter pass.
    pub fn begin_scatter_pass(&mut self) -> Result<()> {
        if self.pass != Pass::Means {
            return Err(Error::InvalidArgument("scatter pass already started".into()));
        }
        if let Some(c) = self.counts.iter().position(|&n| n == 0) {
            return Err(Error::EmptyClass(c));
        }
        for c in 0..self.class_count {
            let n = self.counts[c] as f64;
            for (m, s) in self.means.row_mut(c).iter_mut().zip(self.sums.row(c)) {
                *m = s / n;
            }
        }
        self.pass = Pass::Scatter;
        Ok(())
    }

    /// Merges a partial accumulator over a disjoint set of samples. In the
    /// scatter pass both sides must share identical frozen means.
    pub fn merge(&mut self, other: &StreamingClassAccumulator) -> Result<()> {
        if other.class_count != self.class_count || other.dim != self.dim {
            return Err(Error::DimensionMismatch("merging accumulators of different shape".into()));
        }
        if other.pass != self.pass {
            return Err(Error::InvalidArgument("merging accumulators in different passes".into()));
        }
        match self.pass {
            Pass::Means => {
                for (a, b) in self.counts.iter_mut().zip(&other.counts) {
                    *a += b;
                }
                for (a, b) in self.sums.as_mut_slice().iter_mut().zip(other.sums.as_slice()) {
                    *a += b;
                }
            }
            Pass::Scatter => {
                if self.means != other.means {
                    return Err(Error::InvalidArgument(
                        "merging scatter passes with different class means".into(),
                    ));
                }
                for (a, b) in self.scatter_counts.iter_mut().zip(&other.scatter_counts) {
                    *a += b;
                }
                for (a, b) in self
                    .scatter
                    .as_mut_slice()
                    .iter_mut()
                    .zip(other.scatter.as_slice())
                {
                    *a += b;
                }
            }
        }
        Ok(())
    }

    pub fn finalize(&self) -> Result<ClassStatistics> {
        if let Some(c) = self.counts.iter().position(|&n| n == 0) {
            return Err(Error::EmptyClass(c));
        }
        if self.pass != Pass::Scatter {
            return Err(Error::InvalidArgument("scatter pass was never run".into()));
        }
        if self.scatter_counts != self.counts {
            return Err(Error::InvalidArgument(format!(
                "scatter pass saw class counts {:?}, means pass saw {:?}",
                self.scatter_counts, self.counts
            )));
        }
        let total: usize = self.counts.iter().sum();
        let mut global_mean = vec![0.0; self.dim];
        for c in 0..self.class_count {
            for (g, s) in global_mean.iter_mut().zip(self.sums.row(c)) {
                *g += s;
            }
        }
        for g in &mut global_mean {
            *g /= total as f64;
        }

        let mut sigma_w = self.scatter.scale(1.0 / total as f64);
        mirror_upper(&mut sigma_w);

        let mut sigma_b = Matrix::zeros(self.dim, self.dim);
        let mut centered = vec![0.0; self.dim];
        for c in 0..self.class_count {
            for ((d, m), g) in centered.iter_mut().zip(self.means.row(c)).zip(&global_mean) {
                *d = m - g;
            }
            add_outer_upper(&mut sigma_b, &centered);
        }
        let mut sigma_b = sigma_b.scale(1.0 / self.class_count as f64);
        mirror_upper(&mut sigma_b);

        Ok(ClassStatistics {
            dim: self.dim,
            class_count: self.class_count,
            class_sizes: self.counts.clone(),
            global_mean,
            class_means: self.means.clone(),
            sigma_w,
            sigma_b,
        })
    }
}

/// Runs both passes over an in-memory activation matrix.
pub fn class_statistics(
    activations: &Matrix,
    labels: &[usize],
    class_count: usize,
) -> Result<ClassStatistics> {
    let mut acc = StreamingClassAccumulator::new(class_count, activations.cols())?;
    acc.accumulate(activations, labels)?;
    acc.begin_scatter_pass()?;
    acc.accumulate(activations, labels)?;
    acc.finalize()
}

fn add_outer_upper(target: &mut Matrix, v: &[f64]) {
    let n = v.len();
    for i in 0..n {
        let vi = v[i];
        if vi == 0.0 {
            continue;
        }
        let row = &mut target.row_mut(i)[i..];
        for (t, vj) in row.iter_mut().zip(&v[i..]) {
            *t += vi * vj;
        }
    }
}

fn mirror_upper(m: &mut Matrix) {
    for i in 0..m.rows() {
        for j in 0..i {
            m[(i, j)] = m[(j, i)];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Straight transcription of the dense definitions, one sample at a time.
    fn naive(h: &Matrix, labels: &[usize], c: usize) -> (Vec<f64>, Matrix, Matrix, Matrix) {
        let (n, p) = h.shape();
        let mut mu_g = vec![0.0; p];
        for i in 0..n {
            for k in 0..p {
                mu_g[k] += h[(i, k)] / n as f64;
            }
        }
        let mut mu = Matrix::zeros(c, p);
        let mut counts = vec![0usize; c];
        for i in 0..n {
            counts[labels[i]] += 1;
        }
        for i in 0..n {
            for k in 0..p {
                mu[(labels[i], k)] += h[(i, k)] / counts[labels[i]] as f64;
            }
        }
        let mut sw = Matrix::zeros(p, p);
        for i in 0..n {
            for a in 0..p {
                for b in 0..p {
                    sw[(a, b)] += (h[(i, a)] - mu[(labels[i], a)]) * (h[(i, b)] - mu[(labels[i], b)])
                        / n as f64;
                }
            }
        }
        let mut sb = Matrix::zeros(p, p);
        for cl in 0..c {
            for a in 0..p {
                for b in 0..p {
                    sb[(a, b)] += (mu[(cl, a)] - mu_g[a]) * (mu[(cl, b)] - mu_g[b]) / c as f64;
                }
            }
        }
        (mu_g, mu, sw, sb)
    }

    fn random_data(seed: u64, n: usize, p: usize, c: usize) -> (Matrix, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * p).map(|_| rng.random_range(-2.0..2.0)).collect();
        let labels = (0..n).map(|i| i % c).collect();
        (Matrix::from_vec(n, p, data).unwrap(), labels)
    }

    fn rel_frob(a: &Matrix, b: &Matrix) -> f64 {
        a.sub(b).unwrap().frobenius_norm() / b.frobenius_norm().max(1e-300)
    }

    #[test]
    fn single_sample_classes_have_zero_within_scatter() {
        let h = Matrix::from_rows(&[vec![1.0, 2.0], vec![-3.0, 0.5], vec![0.0, 4.0]]).unwrap();
        let s = class_statistics(&h, &[0, 1, 2], 3).unwrap();
        assert_eq!(s.sigma_w, Matrix::zeros(2, 2));
        assert_eq!(s.class_means, h);
    }

    #[test]
    fn two_antipodal_samples() {
        let h = Matrix::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap();
        let s = class_statistics(&h, &[0, 1], 2).unwrap();
        assert_eq!(s.global_mean, vec![0.0, 0.0]);
        assert_eq!(s.sigma_b, Matrix::from_diag(&[1.0, 0.0]));
    }

    #[test]
    fn constant_data() {
        let v = [0.3, -1.2, 5.0];
        let h = Matrix::from_rows(&vec![v.to_vec(); 6]).unwrap();
        let s = class_statistics(&h, &[0, 1, 2, 0, 1, 2], 3).unwrap();
        for (g, e) in s.global_mean.iter().zip(&v) {
            assert!((g - e).abs() < 1e-15);
        }
        assert!(s.sigma_w.max_abs() < 1e-30);
        assert!(s.sigma_b.max_abs() < 1e-30);
    }

    #[test]
    fn matches_naive_dense_formula() {
        let (h, labels) = random_data(7, 40, 6, 4);
        let s = class_statistics(&h, &labels, 4).unwrap();
        let (mu_g, mu, sw, sb) = naive(&h, &labels, 4);
        for (a, b) in s.global_mean.iter().zip(&mu_g) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(rel_frob(&s.class_means, &mu) < 1e-12);
        assert!(rel_frob(&s.sigma_w, &sw) < 1e-12);
        assert!(rel_frob(&s.sigma_b, &sb) < 1e-12);
    }

    #[test]
    fn missing_class_is_an_error() {
        let (h, _) = random_data(1, 6, 2, 3);
        let err = class_statistics(&h, &[0, 0, 1, 1, 0, 1], 3).unwrap_err();
        assert!(matches!(err, Error::EmptyClass(2)), "{err}");
    }

    #[test]
    fn shape_and_label_errors() {
        let mut acc = StreamingClassAccumulator::new(2, 3).unwrap();
        assert!(matches!(
            acc.accumulate(&Matrix::zeros(1, 2), &[0]),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            acc.accumulate(&Matrix::zeros(1, 3), &[2]),
            Err(Error::LabelOutOfRange { label: 2, classes: 2 })
        ));
        assert!(acc.finalize().is_err());
    }

    #[test]
    fn finalize_requires_scatter_pass_to_see_every_sample() {
        let (h, labels) = random_data(3, 10, 2, 2);
        let mut acc = StreamingClassAccumulator::new(2, 2).unwrap();
        acc.accumulate(&h, &labels).unwrap();
        acc.begin_scatter_pass().unwrap();
        acc.accumulate(&h.select_rows(&[0, 1, 2]), &labels[..3]).unwrap();
        assert!(acc.finalize().is_err());
    }

    #[test]
    fn shuffled_stream_and_merged_shards_agree() {
        let (h, labels) = random_data(11, 100, 5, 3);
        let reference = class_statistics(&h, &labels, 3).unwrap();

        let mut perm: Vec<usize> = (0..100).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        let hp = h.select_rows(&perm);
        let lp: Vec<usize> = perm.iter().map(|&i| labels[i]).collect();

        // Three shards per pass, merged.
        let shards = [0..30, 30..71, 71..100];
        let shard = |r: &std::ops::Range<usize>| {
            let idx: Vec<usize> = r.clone().collect();
            (hp.select_rows(&idx), lp[r.clone()].to_vec())
        };
        let mut acc = StreamingClassAccumulator::new(3, 5).unwrap();
        for r in &shards {
            let (b, l) = shard(r);
            let mut part = StreamingClassAccumulator::new(3, 5).unwrap();
            part.accumulate(&b, &l).unwrap();
            acc.merge(&part).unwrap();
        }
        acc.begin_scatter_pass().unwrap();
        let template = acc.clone();
        let mut merged: Option<StreamingClassAccumulator> = None;
        for r in shards.iter().rev() {
            let (b, l) = shard(r);
            let mut part = template.clone();
            part.scatter = Matrix::zeros(5, 5);
            part.scatter_counts = vec![0; 3];
            part.accumulate(&b, &l).unwrap();
            match merged.as_mut() {
                Some(m) => m.merge(&part).unwrap(),
                None => merged = Some(part),
            }
        }
        let s = merged.unwrap().finalize().unwrap();
        assert!(rel_frob(&s.sigma_w, &reference.sigma_w) < 1e-12);
        assert!(rel_frob(&s.sigma_b, &reference.sigma_b) < 1e-12);
        assert!(rel_frob(&s.class_means, &reference.class_means) < 1e-12);
    }
}
