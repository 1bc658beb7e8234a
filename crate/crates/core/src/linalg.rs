//! Small dense linear algebra used throughout the crate.
//!
//! Matrices here are tiny (state dimensions up to a handful), so everything is
//! written for clarity: cyclic Jacobi for symmetric spectra, power iteration
//! for spectral norms, and scaling-and-squaring for the matrix exponential.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Convergence tolerance shared by the eigenvalue and norm routines.
pub const TOLERANCE: f64 = 1e-12;

const MAX_JACOBI_SWEEPS: usize = 100;
const MAX_POWER_ITERATIONS: usize = 200_000;

/// Eigen-decomposition of a real symmetric matrix.
#[derive(Clone, Debug)]
pub struct SymmetricEigen {
    /// Eigenvalues in ascending order.
    pub values: Vec<f64>,
    /// Column `k` is the unit eigenvector for `values[k]`.
    pub vectors: DMatrix<f64>,
}

/// Cyclic Jacobi rotations on a symmetric matrix.
///
/// Only the symmetric part `(M + Mᵀ)/2` is used. Sweeps continue until the
/// off-diagonal Frobenius mass drops below `1e-14` relative to the matrix
/// norm (absolute below norm 1).
pub fn jacobi_eigen(m: &DMatrix<f64>) -> SymmetricEigen {
    assert!(m.is_square(), "jacobi_eigen requires a square matrix");
    let n = m.nrows();
    let mut a = symmetrize(m);
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = a.norm().max(1.0);

    for _ in 0..MAX_JACOBI_SWEEPS {
        let off: f64 = (0..n).flat_map(|p| (p + 1..n).map(move |q| (p, q))).map(|(p, q)| a[(p, q)] * a[(p, q)]).sum();
        if off.sqrt() <= 1e-14 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    SymmetricEigen { values, vectors }
}

/// Smallest eigenvalue of the symmetric part of `m`; `0` for an empty matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    jacobi_eigen(m).values.first().copied().unwrap_or(0.0)
}

/// Largest eigenvalue of the symmetric part of `m`; `0` for an empty matrix.
pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    jacobi_eigen(m).values.last().copied().unwrap_or(0.0)
}

/// Spectral norm (largest singular value) by power iteration on `MᵀM`.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() || m.iter().all(|&x| x == 0.0) {
        return 0.0;
    }
    let gram = m.transpose() * m;
    // Start from the heaviest column of the Gram matrix: it cannot be
    // orthogonal to every dominant eigenvector.
    let start = (0..gram.ncols()).max_by(|&i, &j| gram.column(i).norm().total_cmp(&gram.column(j).norm())).unwrap_or(0);
    let mut v: DVector<f64> = gram.column(start).into_owned();
    let len = v.norm();
    if len == 0.0 {
        return 0.0;
    }
    v /= len;
    let mut lambda = v.dot(&(&gram * &v));
    for _ in 0..MAX_POWER_ITERATIONS {
        let w = &gram * &v;
        let len = w.norm();
        if len == 0.0 {
            break;
        }
        v = w / len;
        let next = v.dot(&(&gram * &v));
        let done = (next - lambda).abs() <= TOLERANCE * next.abs().max(f64::MIN_POSITIVE);
        lambda = next;
        if done {
            break;
        }
    }
    lambda.max(0.0).sqrt()
}

/// Largest eigenvalue of a Hermitian matrix via its real symmetric embedding
/// `[[Re, -Im], [Im, Re]]`, whose spectrum is the Hermitian one doubled.
pub fn hermitian_max_eigenvalue(h: &DMatrix<Complex64>) -> f64 {
    let n = h.nrows();
    let embed = DMatrix::from_fn(2 * n, 2 * n, |r, c| {
        let (i, j) = (r % n, c % n);
        let z = h[(i, j)];
        match (r < n, c < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    });
    max_eigenvalue(&embed)
}

/// Largest singular value of a complex matrix.
pub fn complex_spectral_norm(g: &DMatrix<Complex64>) -> f64 {
    let gram = g.adjoint() * g;
    hermitian_max_eigenvalue(&gram).max(0.0).sqrt()
}

/// `e^{A t}` by scaling and squaring with a truncated Taylor series.
pub fn matrix_exponential(a: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    if !a.is_square() {
        return Err(Error::Dimension(format!("matrix exponential needs a square matrix, got {}x{}", a.nrows(), a.ncols())));
    }
    if !t.is_finite() || a.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("matrix exponential input"));
    }
    let n = a.nrows();
    let at = a * t;
    let norm = mat_inf_norm(&at);
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = at / 2f64.powi(squarings);

    let mut sum = DMatrix::<f64>::identity(n, n);
    let mut term = DMatrix::<f64>::identity(n, n);
    for k in 1..=40 {
        term = &term * &scaled / k as f64;
        sum += &term;
        if mat_inf_norm(&term) <= f64::EPSILON * 1e-2 * mat_inf_norm(&sum) {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    Ok(sum)
}

/// Induced ∞-norm (maximum absolute row sum).
pub fn mat_inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter().map(|row| row.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// `‖a − b‖∞` for equal-length slices.
pub fn inf_dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc.max((x - y).abs()))
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    m.is_square() && (0..m.nrows()).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol))
}

/// Row-major nested vectors to a matrix, rejecting ragged input.
pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::Dimension("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|row| row.iter().copied().collect()).collect()
}
