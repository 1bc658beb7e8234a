use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::QsrTriple;
use crate::error::{Error, Result};
use crate::linalg::min_eigenvalue;

/// Margins at or above this count as satisfied.
pub const FORM_TOLERANCE: f64 = -1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LtiQsrCheck {
    /// Smallest eigenvalue of the form matrix.
    pub margin: f64,
    pub ok: bool,
}

/// Symmetric matrix `M` with `[x; u]ᵀ M [x; u] = ω(u, Cx+Du) − xᵀP(Ax+Bu)`,
/// i.e. the supply minus the derivative of `½xᵀPx`.
pub fn lti_qsr_form(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    d: &DMatrix<f64>,
    p: &DMatrix<f64>,
    qsr: &QsrTriple,
) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let m = b.ncols();
    let outputs = c.nrows();
    let ok = a.is_square()
        && b.nrows() == n
        && c.ncols() == n
        && d.nrows() == outputs
        && d.ncols() == m
        && p.nrows() == n
        && p.ncols() == n
        && qsr.output_dim() == outputs
        && qsr.input_dim() == m;
    if !ok {
        return Err(Error::Dimension(format!(
            "A {}x{}, B {}x{}, C {}x{}, D {}x{}, P {}x{}, supply rate for {} outputs and {} inputs",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols(),
            c.nrows(),
            c.ncols(),
            d.nrows(),
            d.ncols(),
            p.nrows(),
            p.ncols(),
            qsr.output_dim(),
            qsr.input_dim()
        )));
    }
    let (q, s, r) = (qsr.q(), qsr.s(), qsr.r());
    let pa = p * a;
    let m11 = c.transpose() * q * c - (&pa + pa.transpose()) * 0.5;
    let m12 = c.transpose() * q * d + c.transpose() * s - p * b * 0.5;
    let ds = d.transpose() * s;
    let m22 = d.transpose() * q * d + &ds + ds.transpose() + r;
    let mut form = DMatrix::zeros(n + m, n + m);
    form.view_mut((0, 0), (n, n)).copy_from(&m11);
    form.view_mut((0, n), (n, m)).copy_from(&m12);
    form.view_mut((n, 0), (m, n)).copy_from(&m12.transpose());
    form.view_mut((n, n), (m, m)).copy_from(&m22);
    Ok(form)
}

/// Differential dissipation inequality for `V(x) = ½xᵀPx`, checked as
/// positive semidefiniteness of [`lti_qsr_form`].
pub fn verify_lti_qsr(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    d: &DMatrix<f64>,
    p: &DMatrix<f64>,
    qsr: &QsrTriple,
) -> Result<LtiQsrCheck> {
    let form = lti_qsr_form(a, b, c, d, p, qsr)?;
    let margin = min_eigenvalue(&form);
    Ok(LtiQsrCheck { margin, ok: margin >= FORM_TOLERANCE })
}

/// Grid and refinement settings for [`search_storage`]. `P = LLᵀ` with
/// lower-triangular `L`; off-diagonal entries range over `[−span, span]`,
/// diagonal entries over `[0, span]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StorageSearch {
    pub span: f64,
    /// Points per coordinate of the coarse grid; `None` picks by dimension.
    pub points: Option<usize>,
    /// Step halvings of the pattern search.
    pub refinements: usize,
}

impl Default for StorageSearch {
    fn default() -> Self {
        Self { span: 2.0, points: None, refinements: 48 }
    }
}

pub const MAX_SEARCH_STATES: usize = 3;

/// Coarse-to-fine search for a storage matrix maximizing the form margin.
/// Returns the best `P` when its margin passes, `None` otherwise. `P = 0`
/// is kept unless something strictly better is found.
pub fn search_storage(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    d: &DMatrix<f64>,
    qsr: &QsrTriple,
    grid: &StorageSearch,
) -> Result<Option<DMatrix<f64>>> {
    let n = a.nrows();
    if n > MAX_SEARCH_STATES {
        return Err(Error::Unsupported(format!("storage search supports at most {MAX_SEARCH_STATES} states, got {n}")));
    }
    if !(grid.span > 0.0 && grid.span.is_finite()) {
        return Err(Error::InvalidArgument(format!("search span must be > 0, got {}", grid.span)));
    }
    let slots: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..=i).map(move |j| (i, j))).collect();
    let to_p = |params: &[f64]| {
        let mut l = DMatrix::zeros(n, n);
        for (&(i, j), &v) in slots.iter().zip(params) {
            l[(i, j)] = v;
        }
        &l * l.transpose()
    };
    let score = |params: &[f64]| -> Result<f64> { Ok(verify_lti_qsr(a, b, c, d, &to_p(params), qsr)?.margin) };

    let k = slots.len();
    let mut best = vec![0.0; k];
    let mut best_score = score(&best)?;
    let points = grid.points.unwrap_or(match n {
        0 | 1 => 41,
        2 => 21,
        _ => 7,
    });
    let points = points.max(2);
    let coord = |slot: usize, idx: usize| {
        let (i, j) = slots[slot];
        let t = idx as f64 / (points - 1) as f64;
        if i == j {
            t * grid.span
        } else {
            (2.0 * t - 1.0) * grid.span
        }
    };
    let mut idx = vec![0usize; k];
    let mut candidate = vec![0.0; k];
    if k > 0 {
        loop {
            for s in 0..k {
                candidate[s] = coord(s, idx[s]);
            }
            let sc = score(&candidate)?;
            if sc > best_score {
                best_score = sc;
                best.copy_from_slice(&candidate);
            }
            let mut s = k;
            let done = loop {
                if s == 0 {
                    break true;
                }
                s -= 1;
                idx[s] += 1;
                if idx[s] < points {
                    break false;
                }
                idx[s] = 0;
            };
            if done {
                break;
            }
        }
    }

    // compass pattern search from the best grid point
    let mut step = grid.span / (points - 1) as f64;
    for _ in 0..grid.refinements {
        let mut improved = true;
        while improved {
            improved = false;
            for s in 0..k {
                for dir in [1.0, -1.0] {
                    let mut trial = best.clone();
                    trial[s] += dir * step;
                    let sc = score(&trial)?;
                    if sc > best_score {
                        best_score = sc;
                        best = trial;
                        improved = true;
                    }
                }
            }
        }
        step *= 0.5;
    }
    Ok((best_score >= FORM_TOLERANCE).then(|| to_p(&best)))
}
