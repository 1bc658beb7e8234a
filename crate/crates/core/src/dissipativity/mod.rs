//! Quadratic supply rates, storage functions and dissipativity checks for
//! plants, their abstractions and feedback interconnections.

mod continuous;
mod formulas;
mod quasi;
mod transfer;

pub use continuous::{lti_qsr_form, search_storage, verify_lti_qsr, LtiQsrCheck, StorageSearch};
pub use formulas::{abstraction_qsr_output_measured, abstraction_qsr_state_measured, FormulaMode};
pub use quasi::{
    default_beta, kron_batch_check, lipschitz_bound, verify_quasi_dissipativity, BetaPolicy, QuasiCertificate, TransitionMargin,
};
pub use transfer::{
    composition_qsr, search_transfer_shift, transfer_offset_constant, transfer_passivity_indices, transfer_qsr_from_abstraction,
    TransferCheck, TransferConstants, TransferShift,
};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{from_rows, is_symmetric, to_rows};

/// Symmetry tolerance for `Q` and `R`.
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;

/// Supply rate matrices of `ω(u, y) = yᵀQy + 2yᵀSu + uᵀRu`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "QsrRows", into = "QsrRows")]
pub struct QsrTriple {
    q: DMatrix<f64>,
    s: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl QsrTriple {
    /// `Q` is p×p, `S` is p×m, `R` is m×m; `Q` and `R` symmetric.
    pub fn new(q: DMatrix<f64>, s: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        let (p, m) = (q.nrows(), r.nrows());
        if !q.is_square() || !r.is_square() || s.nrows() != p || s.ncols() != m {
            return Err(Error::Dimension(format!(
                "Q {}x{}, S {}x{}, R {}x{}",
                q.nrows(),
                q.ncols(),
                s.nrows(),
                s.ncols(),
                r.nrows(),
                r.ncols()
            )));
        }
        if [&q, &s, &r].iter().any(|m| m.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite("supply rate matrices"));
        }
        if !is_symmetric(&q, SYMMETRY_TOLERANCE) || !is_symmetric(&r, SYMMETRY_TOLERANCE) {
            return Err(Error::InvalidArgument("Q and R must be symmetric".into()));
        }
        Ok(Self { q, s, r })
    }

    /// `Q = −ρI`, `S = ½I`, `R = −νI` of size `dim`.
    pub fn passivity(rho: f64, nu: f64, dim: usize) -> Self {
        Self { q: DMatrix::identity(dim, dim) * -rho, s: DMatrix::identity(dim, dim) * 0.5, r: DMatrix::identity(dim, dim) * -nu }
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn s(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn output_dim(&self) -> usize {
        self.q.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.r.nrows()
    }

    /// `(ρ, ν)` when the triple has the passivity structure.
    pub fn as_passivity(&self) -> Option<PassivityIndices> {
        let n = self.output_dim();
        if n == 0 || self.input_dim() != n {
            return None;
        }
        let rho = -self.q[(0, 0)];
        let nu = -self.r[(0, 0)];
        let expected = Self::passivity(rho, nu, n);
        let close = |a: &DMatrix<f64>, b: &DMatrix<f64>| (a - b).amax() <= SYMMETRY_TOLERANCE;
        (close(&self.q, &expected.q) && close(&self.s, &expected.s) && close(&self.r, &expected.r))
            .then_some(PassivityIndices { rho, nu })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QsrRows {
    q: Vec<Vec<f64>>,
    s: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>,
}

impl TryFrom<QsrRows> for QsrTriple {
    type Error = Error;

    fn try_from(rows: QsrRows) -> Result<Self> {
        let q = from_rows(&rows.q)?;
        let r = from_rows(&rows.r)?;
        // an empty row list cannot carry a column count
        let s = if rows.s.is_empty() { DMatrix::zeros(q.nrows(), r.nrows()) } else { from_rows(&rows.s)? };
        Self::new(q, s, r)
    }
}

impl From<QsrTriple> for QsrRows {
    fn from(t: QsrTriple) -> Self {
        Self { q: to_rows(&t.q), s: to_rows(&t.s), r: to_rows(&t.r) }
    }
}

/// Output-feedback (`ρ`) and input-feedforward (`ν`) passivity indices.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PassivityIndices {
    pub rho: f64,
    pub nu: f64,
}

impl PassivityIndices {
    pub fn to_qsr(self, dim: usize) -> QsrTriple {
        QsrTriple::passivity(self.rho, self.nu, dim)
    }
}

/// `yᵀQy + 2yᵀSu + uᵀRu`.
pub fn supply_rate(qsr: &QsrTriple, u: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
    if u.len() != qsr.input_dim() || y.len() != qsr.output_dim() {
        return Err(Error::Dimension(format!(
            "supply rate expects u of length {} and y of length {}, got {} and {}",
            qsr.input_dim(),
            qsr.output_dim(),
            u.len(),
            y.len()
        )));
    }
    Ok(supply_rate_unchecked(qsr, u.as_slice(), y.as_slice()))
}

pub(crate) fn supply_rate_unchecked(qsr: &QsrTriple, u: &[f64], y: &[f64]) -> f64 {
    let quad = |m: &DMatrix<f64>, a: &[f64], b: &[f64]| -> f64 {
        let mut acc = 0.0;
        for (i, ai) in a.iter().enumerate() {
            for (j, bj) in b.iter().enumerate() {
                acc += ai * m[(i, j)] * bj;
            }
        }
        acc
    };
    quad(&qsr.q, y, y) + 2.0 * quad(&qsr.s, y, u) + quad(&qsr.r, u, u)
}

/// `V(x) = scale · xᵀPx` with Lipschitz constant `lipschitz` for `½xᵀPx`
/// on the working domain under the ∞-norm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StorageRows", into = "StorageRows")]
pub struct StorageFunction {
    p: DMatrix<f64>,
    scale: f64,
    lipschitz: f64,
}

/// PSD tolerance on the storage matrix.
pub const PSD_TOLERANCE: f64 = 1e-9;

impl StorageFunction {
    pub fn new(p: DMatrix<f64>, scale: f64, lipschitz: f64) -> Result<Self> {
        if !p.is_square() {
            return Err(Error::Dimension(format!("storage matrix is {}x{}", p.nrows(), p.ncols())));
        }
        if p.iter().any(|v| !v.is_finite()) || !scale.is_finite() || !lipschitz.is_finite() {
            return Err(Error::NonFinite("storage function"));
        }
        if !is_symmetric(&p, SYMMETRY_TOLERANCE) {
            return Err(Error::InvalidArgument("storage matrix must be symmetric".into()));
        }
        if p.nrows() > 0 && crate::linalg::min_eigenvalue(&p) < -PSD_TOLERANCE {
            return Err(Error::InvalidArgument("storage matrix must be positive semidefinite".into()));
        }
        if scale <= 0.0 {
            return Err(Error::InvalidArgument(format!("storage scale must be > 0, got {scale}")));
        }
        if lipschitz < 0.0 {
            return Err(Error::InvalidArgument(format!("Lipschitz constant must be ≥ 0, got {lipschitz}")));
        }
        Ok(Self { p, scale, lipschitz })
    }

    /// Quadratic storage with the per-sample scale `1/(2τ)`.
    pub fn sampled(p: DMatrix<f64>, tau: f64, lipschitz: f64) -> Result<Self> {
        Self::new(p, 1.0 / (2.0 * tau), lipschitz)
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn with_lipschitz(mut self, lipschitz: f64) -> Self {
        self.lipschitz = lipschitz;
        self
    }

    /// `xᵀPx`.
    pub fn quadratic(&self, x: &[f64]) -> f64 {
        let n = self.p.nrows();
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += x[i] * self.p[(i, j)] * x[j];
            }
        }
        acc
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.scale * self.quadratic(x)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StorageRows {
    p: Vec<Vec<f64>>,
    scale: f64,
    lipschitz: f64,
}

impl TryFrom<StorageRows> for StorageFunction {
    type Error = Error;

    fn try_from(rows: StorageRows) -> Result<Self> {
        Self::new(from_rows(&rows.p)?, rows.scale, rows.lipschitz)
    }
}

impl From<StorageFunction> for StorageRows {
    fn from(s: StorageFunction) -> Self {
        Self { p: to_rows(&s.p), scale: s.scale, lipschitz: s.lipschitz }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedbackIndex {
    pub ok: bool,
    pub rho_cl: f64,
}

/// Passivity of the negative feedback loop of two systems with indices
/// `(ρ₁, ν₁)` and `(ρ₂, ν₂)`: requires `ν₁ > 0`, `ρ₂ > 0`, `ρ₁ + ν₂ > 0`.
pub fn feedback_passivity_index(rho1: f64, nu1: f64, rho2: f64, nu2: f64) -> FeedbackIndex {
    FeedbackIndex { ok: nu1 > 0.0 && rho2 > 0.0 && rho1 + nu2 > 0.0, rho_cl: (rho1 + nu2).min(rho2 + nu1) }
}
