//! Independent oracles and fixture generators shared by the integration
//! tests and the acceptance suite. Nothing here calls the library's linear
//! algebra.
#![allow(dead_code)]

use layercollapse::linalg::Matrix;
use layercollapse::nn::{Activation, MlpModel};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Dense = Vec<Vec<f64>>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn to_dense(m: &Matrix) -> Dense {
    m.row_iter().map(|r| r.to_vec()).collect()
}

pub fn from_dense(d: &Dense) -> Matrix {
    Matrix::from_rows(d).unwrap()
}

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix. Returns
/// eigenvalues and eigenvectors as columns of `v`.
pub fn jacobi_eigen(a: &Dense) -> (Vec<f64>, Dense) {
    let n = a.len();
    let mut a = a.clone();
    let mut v: Dense = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let scale: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum::<f64>().max(f64::MIN_POSITIVE);
        if off <= 1e-32 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k][p], v[k][q]);
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i][i]).collect(), v)
}

/// Pseudoinverse of a symmetric matrix: eigenvalues with magnitude at most
/// `rel_tol · max|λ|` are treated as zero.
pub fn jacobi_pinv(a: &Dense, rel_tol: f64) -> Dense {
    let n = a.len();
    let (vals, vecs) = jacobi_eigen(a);
    let top = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut out = vec![vec![0.0; n]; n];
    for (k, &lam) in vals.iter().enumerate() {
        if lam.abs() <= rel_tol * top || lam == 0.0 {
            continue;
        }
        for i in 0..n {
            for j in 0..n {
                out[i][j] += vecs[i][k] * vecs[j][k] / lam;
            }
        }
    }
    out
}

pub fn matmul(a: &Dense, b: &Dense) -> Dense {
    let (n, m, p) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; p]; n];
    for i in 0..n {
        for k in 0..m {
            for j in 0..p {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

/// Metrics computed literally from their definitions, one sample at a time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NaiveMetrics {
    pub nc1: f64,
    pub nc2_norms: f64,
    pub nc2_angles: f64,
    pub nc4: f64,
    /// Condition number of Σ_B over its retained eigenvalues. Forming and
    /// inverting Σ_B in f64 limits the oracle's own nc1 to about κ·ε relative.
    pub sigma_b_condition: f64,
}

pub fn naive_metrics(h: &Dense, labels: &[usize], preds: &[usize], c: usize) -> NaiveMetrics {
    let n = h.len();
    let p = h[0].len();
    let mut mu_g = vec![0.0; p];
    for x in h {
        for j in 0..p {
            mu_g[j] += x[j] / n as f64;
        }
    }
    let mut means = vec![vec![0.0; p]; c];
    let mut counts = vec![0usize; c];
    for (x, &y) in h.iter().zip(labels) {
        counts[y] += 1;
        for j in 0..p {
            means[y][j] += x[j];
        }
    }
    for (m, &k) in means.iter_mut().zip(&counts) {
        for v in m.iter_mut() {
            *v /= k as f64;
        }
    }
    let mut sigma_w = vec![vec![0.0; p]; p];
    for (x, &y) in h.iter().zip(labels) {
        for a in 0..p {
            for b in 0..p {
                sigma_w[a][b] += (x[a] - means[y][a]) * (x[b] - means[y][b]) / n as f64;
            }
        }
    }
    let centered: Dense = means
        .iter()
        .map(|m| m.iter().zip(&mu_g).map(|(a, b)| a - b).collect())
        .collect();
    let mut sigma_b = vec![vec![0.0; p]; p];
    for d in &centered {
        for a in 0..p {
            for b in 0..p {
                sigma_b[a][b] += d[a] * d[b] / c as f64;
            }
        }
    }
    let tol = p as f64 * f64::EPSILON;
    let pinv = jacobi_pinv(&sigma_b, tol);
    let (vals, _) = jacobi_eigen(&sigma_b);
    let top = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let bottom = vals
        .iter()
        .map(|v| v.abs())
        .filter(|&v| v > tol * top && v > 0.0)
        .fold(f64::INFINITY, f64::min);
    let sigma_b_condition = if bottom.is_finite() { top / bottom } else { 1.0 };
    let prod = matmul(&sigma_w, &pinv);
    let nc1 = (0..p).map(|i| prod[i][i]).sum::<f64>() / c as f64;

    let norms: Vec<f64> = centered.iter().map(|d| d.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    let avg = norms.iter().sum::<f64>() / c as f64;
    let var = norms.iter().map(|v| (v - avg).powi(2)).sum::<f64>() / c as f64;
    let nc2_norms = var.sqrt() / avg;

    let mut total = 0.0;
    let mut pairs = 0usize;
    for a in 0..c {
        for b in (a + 1)..c {
            let dot: f64 = centered[a].iter().zip(&centered[b]).map(|(x, y)| x * y).sum();
            total += (dot / (norms[a] * norms[b]) + 1.0 / (c as f64 - 1.0)).abs();
            pairs += 1;
        }
    }
    let nc2_angles = total / pairs as f64;

    let mut mismatches = 0usize;
    for (x, &pred) in h.iter().zip(preds) {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (k, m) in means.iter().enumerate() {
            let d: f64 = x.iter().zip(m).map(|(a, b)| (a - b).powi(2)).sum();
            if d < best_d {
                best_d = d;
                best = k;
            }
        }
        if best != pred {
            mismatches += 1;
        }
    }
    NaiveMetrics {
        nc1,
        nc2_norms,
        nc2_angles,
        nc4: mismatches as f64 / n as f64,
        sigma_b_condition,
    }
}

/// Random labelled activations: Gaussian class means, Gaussian noise,
/// every class present, predictions agreeing with labels about 80% of the time.
pub struct Instance {
    pub h: Matrix,
    pub labels: Vec<usize>,
    pub preds: Vec<usize>,
    pub c: usize,
}

pub fn random_instance(seed: u64, c: usize, p: usize, n: usize) -> Instance {
    let mut r = rng(seed);
    let means: Dense = (0..c).map(|_| (0..p).map(|_| 3.0 * gaussian(&mut r)).collect()).collect();
    let mut labels: Vec<usize> = (0..n).map(|i| i % c).collect();
    labels.shuffle(&mut r);
    let rows: Dense = labels
        .iter()
        .map(|&y| means[y].iter().map(|m| m + gaussian(&mut r)).collect())
        .collect();
    let preds = labels
        .iter()
        .map(|&y| if r.random::<f64>() < 0.8 { y } else { r.random_range(0..c) })
        .collect();
    Instance {
        h: from_dense(&rows),
        labels,
        preds,
        c,
    }
}

/// Haar-ish random orthogonal matrix from the QR factorization of a Gaussian one.
pub fn random_orthogonal(seed: u64, p: usize) -> Matrix {
    let mut r = rng(seed);
    let g = nalgebra::DMatrix::from_fn(p, p, |_, _| gaussian(&mut r));
    let q = g.qr().q();
    Matrix::from_rows(&(0..p).map(|i| (0..p).map(|j| q[(i, j)]).collect()).collect::<Vec<_>>()).unwrap()
}

/// Plain-loop forward pass, returning post-activations of every hidden layer
/// and the logits.
pub fn straight_line_forward(model: &MlpModel, x: &Dense) -> (Vec<Dense>, Dense) {
    let act = |z: f64| match model.activation {
        Activation::Relu => z.max(0.0),
        Activation::Tanh => z.tanh(),
        Activation::LeakyRelu { slope } => {
            if z > 0.0 {
                z
            } else {
                slope * z
            }
        }
    };
    let mut hidden = Vec::new();
    let mut cur = x.clone();
    let last = model.layers.len() - 1;
    for (k, layer) in model.layers.iter().enumerate() {
        let w = &layer.weight;
        let next: Dense = cur
            .iter()
            .map(|row| {
                (0..w.rows())
                    .map(|o| {
                        let mut z = layer.bias[o];
                        for (i, v) in row.iter().enumerate() {
                            z += w[(o, i)] * v;
                        }
                        if k == last {
                            z
                        } else {
                            act(z)
                        }
                    })
                    .collect()
            })
            .collect();
        if k != last {
            hidden.push(next.clone());
        }
        cur = next;
    }
    (hidden, cur)
}

pub fn random_small_model(seed: u64, activation: Activation) -> MlpModel {
    use layercollapse::nn::{init_model, ArchitectureSpec};
    let mut r = rng(seed);
    let depth = r.random_range(1..=3);
    let spec = ArchitectureSpec {
        input_dim: r.random_range(2..=8),
        hidden: (0..depth).map(|_| r.random_range(2..=8)).collect(),
        class_count: r.random_range(2..=5),
        activation,
    };
    let mut model = init_model(&spec, seed).unwrap();
    // non-zero biases so every parameter gets exercised
    for layer in &mut model.layers {
        for b in &mut layer.bias {
            *b = 0.3 * gaussian(&mut r);
        }
    }
    model
}

/// Outcome of comparing analytic gradients with central differences.
#[derive(Debug, Default)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub checked: usize,
    /// Coordinates whose ±h perturbation flips a piecewise-linear kink.
    pub skipped: usize,
}

/// `|a − n| / max(|a|, |n|, floor)`
pub fn rel_err(a: f64, n: f64, floor: f64) -> f64 {
    let d = (a - n).abs();
    if d == 0.0 {
        0.0
    } else {
        d / a.abs().max(n.abs()).max(floor)
    }
}

pub fn grad_check(model: &MlpModel, x: &Matrix, labels: &[usize], h: f64, floor: f64) -> GradCheck {
    use layercollapse::nn::mse_loss;
    let (_, grads) = model.backward(x, labels).unwrap();
    let pattern = |m: &MlpModel| -> Vec<bool> {
        m.forward(x)
            .unwrap()
            .hidden
            .iter()
            .flat_map(|h| h.as_slice().iter().map(|&v| v > 0.0).collect::<Vec<_>>())
            .collect()
    };
    let kinked = !matches!(model.activation, Activation::Tanh);
    let base_pattern = pattern(model);
    let loss = |m: &MlpModel| mse_loss(&m.predict_logits(x).unwrap(), labels).unwrap();
    let mut out = GradCheck::default();
    for (l, layer) in model.layers.iter().enumerate() {
        let n_w = layer.weight.as_slice().len();
        for idx in 0..n_w + layer.bias.len() {
            let perturbed = |delta: f64| {
                let mut m = model.clone();
                let target = &mut m.layers[l];
                if idx < n_w {
                    target.weight.as_mut_slice()[idx] += delta;
                } else {
                    target.bias[idx - n_w] += delta;
                }
                m
            };
            let (plus, minus) = (perturbed(h), perturbed(-h));
            if kinked && (pattern(&plus) != base_pattern || pattern(&minus) != base_pattern) {
                out.skipped += 1;
                continue;
            }
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let g = &grads.layers[l];
            let analytic = if idx < n_w {
                g.weight.as_slice()[idx]
            } else {
                g.bias[idx - n_w]
            };
            out.max_rel_err = out.max_rel_err.max(rel_err(analytic, numeric, floor));
            out.checked += 1;
        }
    }
    out
}

/// Denominator floor of the gradient-check relative error. Below it the
/// comparison is effectively absolute, since central differences carry a
/// rounding error of about `ε·loss/h ≈ 1e-11`.
pub const GRAD_FLOOR: f64 = 1e-4;
pub const GRAD_H: f64 = 1e-5;

/// Worst gradient-check result over `count` random small models.
pub fn grad_check_models(activation: Activation, count: u64) -> GradCheck {
    let mut total = GradCheck::default();
    for seed in 0..count {
        let model = random_small_model(seed * 7 + 1, activation);
        let mut r = rng(seed + 1000);
        let d = model.input_dim();
        let x = Matrix::from_vec(6, d, (0..6 * d).map(|_| gaussian(&mut r)).collect()).unwrap();
        let y: Vec<usize> = (0..6).map(|_| r.random_range(0..model.class_count())).collect();
        let g = grad_check(&model, &x, &y, GRAD_H, GRAD_FLOOR);
        total.max_rel_err = total.max_rel_err.max(g.max_rel_err);
        total.checked += g.checked;
        total.skipped += g.skipped;
    }
    total
}
