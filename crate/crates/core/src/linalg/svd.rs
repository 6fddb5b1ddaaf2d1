use nalgebra::linalg::SymmetricEigen;

use super::Matrix;
use crate::error::{Error, Result};

const MAX_ITERATIONS: usize = 10_000;
const MAX_SWEEPS: usize = 80;
/// Largest accepted `‖U·S·Vᵀ − M‖_F / ‖M‖_F`.
const RECONSTRUCTION_TOL: f64 = 1e-10;

/// Thin singular value decomposition `m = u · diag(s) · vt`.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: Matrix,
    /// Non-increasing, non-negative.
    pub singular_values: Vec<f64>,
    pub vt: Matrix,
}

impl SvdResult {
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for i in 0..us.rows() {
            for (v, s) in us.row_mut(i).iter_mut().zip(&self.singular_values) {
                *v *= s;
            }
        }
        us.matmul(&self.vt).expect("svd factors chain")
    }
}

/// Rank cutoff used when none is supplied: `dim · ε`.
pub fn default_rel_tol(dim: usize) -> f64 {
    dim.max(1) as f64 * f64::EPSILON
}

pub fn svd(m: &Matrix) -> Result<SvdResult> {
    if m.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "svd of empty {}x{} matrix",
            m.rows(),
            m.cols()
        )));
    }
    if !m.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "svd of non-finite {}x{} matrix",
            m.rows(),
            m.cols()
        )));
    }
    let (rows, cols) = m.shape();
    // nalgebra's bidiagonal SVD can return wrong factors when one singular
    // value is at roundoff level, so one-sided Jacobi is used instead.
    let out = if rows >= cols {
        let (u, s, v) = one_sided_jacobi(m).ok_or(Error::SvdNoConvergence { rows, cols })?;
        SvdResult { u, singular_values: s, vt: v.transpose() }
    } else {
        let (u, s, v) = one_sided_jacobi(&m.transpose()).ok_or(Error::SvdNoConvergence { rows, cols })?;
        SvdResult { u: v, singular_values: s, vt: u.transpose() }
    };
    let norm = m.frobenius_norm();
    if out.reconstruct().sub(m)?.frobenius_norm() > RECONSTRUCTION_TOL * norm {
        return Err(Error::SvdNoConvergence { rows, cols });
    }
    Ok(out)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Hestenes one-sided Jacobi on a tall `m` (rows ≥ cols). Returns `(U, s, V)`
/// with `U` rows×cols and `V` cols×cols, singular values sorted descending.
fn one_sided_jacobi(m: &Matrix) -> Option<(Matrix, Vec<f64>, Matrix)> {
    let (rows, n) = m.shape();
    let mut a: Vec<Vec<f64>> = (0..n).map(|j| (0..rows).map(|i| m[(i, j)]).collect()).collect();
    let mut v: Vec<Vec<f64>> = (0..n).map(|j| (0..n).map(|i| f64::from(u8::from(i == j))).collect()).collect();
    let tol = f64::EPSILON * rows as f64;
    // columns below this squared norm are roundoff; their direction is noise
    let negligible = (f64::EPSILON * m.frobenius_norm()).powi(2);
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..n {
            for j in i + 1..n {
                let alpha = dot(&a[i], &a[i]);
                let beta = dot(&a[j], &a[j]);
                let gamma = dot(&a[i], &a[j]);
                if gamma == 0.0 || alpha.min(beta) <= negligible || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + zeta.hypot(1.0));
                let c = 1.0 / t.hypot(1.0);
                let s = c * t;
                for cols in [&mut a, &mut v] {
                    let (lo, hi) = cols.split_at_mut(j);
                    for (x, y) in lo[i].iter_mut().zip(hi[0].iter_mut()) {
                        let (xi, yj) = (*x, *y);
                        *x = c * xi - s * yj;
                        *y = s * xi + c * yj;
                    }
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return None;
    }
    let norms: Vec<f64> = a.iter().map(|col| dot(col, col).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));
    let s_max = order.first().map_or(0.0, |&k| norms[k]);
    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    for &k in &order {
        let sigma = norms[k];
        values.push(sigma);
        // directions of (near-)zero columns carry no reliable information
        if sigma > 0.0 && sigma > s_max * f64::EPSILON * rows as f64 {
            u_cols.push(a[k].iter().map(|x| x / sigma).collect());
        } else {
            u_cols.push(complete_basis(&u_cols, rows));
        }
    }
    let u = Matrix::from_fn(rows, n, |i, k| u_cols[k][i]);
    let v = Matrix::from_fn(n, n, |i, k| v[order[k]][i]);
    Some((u, values, v))
}

/// A unit vector orthogonal to every vector in `basis` (which has fewer than
/// `len` orthonormal entries).
fn complete_basis(basis: &[Vec<f64>], len: usize) -> Vec<f64> {
    let mut best = vec![0.0; len];
    let mut best_norm = -1.0;
    for e in 0..len {
        let mut w: Vec<f64> = (0..len).map(|i| f64::from(u8::from(i == e))).collect();
        for _ in 0..2 {
            for b in basis {
                let proj = dot(&w, b);
                for (x, y) in w.iter_mut().zip(b) {
                    *x -= proj * y;
                }
            }
        }
        let norm = dot(&w, &w).sqrt();
        if norm > best_norm {
            best_norm = norm;
            best = w;
        }
        if norm > 0.5 {
            break;
        }
    }
    best.iter().map(|x| x / best_norm).collect()
}

/// Moore–Penrose pseudoinverse. Singular values `σ ≤ rel_tol · σ_max` are
/// treated as zero. Symmetric input goes through the eigen-decomposition path.
pub fn pseudoinverse(m: &Matrix, rel_tol: f64) -> Result<Matrix> {
    if !(rel_tol > 0.0) {
        return Err(Error::InvalidArgument(format!("rel_tol must be > 0, got {rel_tol}")));
    }
    if m.rows() == m.cols() && m.is_symmetric(0.0) {
        pseudoinverse_symmetric(m, rel_tol)
    } else {
        pseudoinverse_svd(m, rel_tol)
    }
}

/// Pseudoinverse through the general SVD, for any shape.
pub fn pseudoinverse_svd(m: &Matrix, rel_tol: f64) -> Result<Matrix> {
    let dec = svd(m)?;
    let s_max = dec.singular_values.first().copied().unwrap_or(0.0);
    let cutoff = rel_tol * s_max;
    let (rows, cols) = m.shape();
    let mut out = Matrix::zeros(cols, rows);
    for (k, &s) in dec.singular_values.iter().enumerate() {
        if s <= cutoff || s == 0.0 {
            continue;
        }
        let inv = 1.0 / s;
        for i in 0..cols {
            let vik = dec.vt[(k, i)] * inv;
            if vik == 0.0 {
                continue;
            }
            for j in 0..rows {
                out[(i, j)] += vik * dec.u[(j, k)];
            }
        }
    }
    Ok(out)
}

/// Pseudoinverse of a symmetric matrix through its eigen-decomposition.
/// Eigenvalues with `|λ| ≤ rel_tol · max|λ|` are dropped.
pub fn pseudoinverse_symmetric(m: &Matrix, rel_tol: f64) -> Result<Matrix> {
    let (rows, cols) = m.shape();
    if rows != cols {
        return Err(Error::DimensionMismatch(format!(
            "symmetric pseudoinverse needs a square matrix, got {rows}x{cols}"
        )));
    }
    if m.is_empty() || !m.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "eigen-decomposition of empty or non-finite {rows}x{cols} matrix"
        )));
    }
    let eig = SymmetricEigen::try_new(m.to_nalgebra(), f64::EPSILON, MAX_ITERATIONS)
        .ok_or(Error::SvdNoConvergence { rows, cols })?;
    let lambda_max = eig.eigenvalues.iter().fold(0.0f64, |a, l| a.max(l.abs()));
    let cutoff = rel_tol * lambda_max;
    let n = rows;
    let mut out = Matrix::zeros(n, n);
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda.abs() <= cutoff || lambda == 0.0 {
            continue;
        }
        let inv = 1.0 / lambda;
        let v = eig.eigenvectors.column(k);
        for i in 0..n {
            let vi = v[i] * inv;
            for j in 0..n {
                out[(i, j)] += vi * v[j];
            }
        }
    }
    out.symmetrize();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_singular_values() {
        let s = svd(&Matrix::identity(3)).unwrap();
        assert_eq!(s.singular_values.len(), 3);
        for v in &s.singular_values {
            assert!((v - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_matrix() {
        let s = svd(&Matrix::zeros(2, 2)).unwrap();
        assert_eq!(s.singular_values, vec![0.0, 0.0]);
        let p = pseudoinverse(&Matrix::zeros(2, 2), 1e-12).unwrap();
        assert_eq!(p, Matrix::zeros(2, 2));
    }

    #[test]
    fn diagonal_case() {
        let d = Matrix::from_diag(&[3.0, 1.0]);
        let s = svd(&d).unwrap();
        assert!((s.singular_values[0] - 3.0).abs() < 1e-14);
        assert!((s.singular_values[1] - 1.0).abs() < 1e-14);
        // identity up to sign
        for i in 0..2 {
            for j in 0..2 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((s.u[(i, j)].abs() - expect).abs() < 1e-14);
                assert!((s.vt[(i, j)].abs() - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn empty_and_nonpositive_tol_rejected() {
        assert!(svd(&Matrix::zeros(0, 0)).is_err());
        assert!(pseudoinverse(&Matrix::identity(2), 0.0).is_err());
    }

    #[test]
    fn pinv_identity_and_rank_deficient_diag() {
        let p = pseudoinverse(&Matrix::identity(4), 1e-12).unwrap();
        assert!(p.max_abs_diff(&Matrix::identity(4)) < 1e-15);
        let p = pseudoinverse(&Matrix::from_diag(&[2.0, 0.0]), 1e-12).unwrap();
        assert!(p.max_abs_diff(&Matrix::from_diag(&[0.5, 0.0])) < 1e-15);
    }

    #[test]
    fn rectangular_pinv() {
        let a = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 1.0]]).unwrap();
        let p = pseudoinverse(&a, 1e-12).unwrap();
        let expect = Matrix::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 0.5, 0.5]]).unwrap();
        assert!(p.max_abs_diff(&expect) < 1e-14);
    }

    #[test]
    fn cutoff_drops_small_singular_values() {
        let d = Matrix::from_diag(&[1.0, 1e-3]);
        let p = pseudoinverse_svd(&d, 1e-2).unwrap();
        assert!(p.max_abs_diff(&Matrix::from_diag(&[1.0, 0.0])) < 1e-15);
        let p = pseudoinverse_symmetric(&d, 1e-2).unwrap();
        assert!(p.max_abs_diff(&Matrix::from_diag(&[1.0, 0.0])) < 1e-15);
    }

    fn orthonormal_columns(m: &Matrix) -> f64 {
        m.transpose().matmul(m).unwrap().max_abs_diff(&Matrix::identity(m.cols()))
    }

    #[test]
    fn rank_deficient_wide_rows_summing_to_zero() {
        // three centered rows: rank 2, smallest singular value at roundoff level
        let base: Vec<Vec<f64>> = (0..2)
            .map(|r| (0..16).map(|j| ((r * 16 + j) as f64 * 0.731).sin() * 3.0).collect())
            .collect();
        let third: Vec<f64> = base[0].iter().zip(&base[1]).map(|(a, b)| -a - b).collect();
        let m = Matrix::from_rows(&[base[0].clone(), base[1].clone(), third]).unwrap();
        let s = svd(&m).unwrap();
        assert!(s.reconstruct().max_abs_diff(&m) < 1e-13);
        assert!(s.singular_values[2] < 1e-13 * s.singular_values[0]);
        assert!(orthonormal_columns(&s.u) < 1e-13);
        assert!(orthonormal_columns(&s.vt.transpose()) < 1e-13);
    }

    #[test]
    fn zero_columns_still_give_orthonormal_factors() {
        let m = Matrix::from_rows(&[vec![0.0, 2.0, 0.0], vec![0.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0; 3]]).unwrap();
        let s = svd(&m).unwrap();
        assert!((s.singular_values[0] - 5f64.sqrt()).abs() < 1e-15);
        assert_eq!(&s.singular_values[1..], &[0.0, 0.0]);
        assert!(orthonormal_columns(&s.u) < 1e-15);
        assert!(orthonormal_columns(&s.vt.transpose()) < 1e-15);
        assert!(s.reconstruct().max_abs_diff(&m) < 1e-15);
    }
}
