use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{PassivityIndices, QsrTriple};
use crate::error::{Error, Result};
use crate::linalg::{max_eigenvalue, min_eigenvalue, spectral_norm};

/// Tolerance on the two eigenvalue slacks and on `S₁ = S₂`.
pub const SLACK_TOLERANCE: f64 = 1e-12;

/// The four free constants of the transfer inequalities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferConstants {
    pub zeta1: f64,
    pub zeta2: f64,
    pub zeta3: f64,
    pub zeta4: f64,
}

impl TransferConstants {
    pub fn new(zeta1: f64, zeta2: f64, zeta3: f64, zeta4: f64) -> Result<Self> {
        let z = Self { zeta1, zeta2, zeta3, zeta4 };
        z.validate()?;
        Ok(z)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("zeta1", self.zeta1), ("zeta2", self.zeta2), ("zeta3", self.zeta3), ("zeta4", self.zeta4)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferCheck {
    pub ok: bool,
    /// `[λ_min(Q₁−Q₂) − ζ₁‖Q₁‖² − ζ₃, λ_min(R₁−R₂) − ζ₂‖S₁‖² − ζ₄‖R₁‖², max|S₁−S₂|]`.
    pub slacks: [f64; 3],
}

/// Checks a candidate `(Q₁, S₁, R₁)` for a system simulated by one that is
/// dissipative with `known = (Q₂, S₂, R₂)`.
pub fn transfer_qsr_from_abstraction(
    known: &QsrTriple,
    zeta: &TransferConstants,
    candidate: &QsrTriple,
) -> Result<TransferCheck> {
    if known.output_dim() != candidate.output_dim() || known.input_dim() != candidate.input_dim() {
        return Err(Error::Dimension(format!(
            "supply rates for ({}, {}) and ({}, {}) outputs/inputs",
            known.output_dim(),
            known.input_dim(),
            candidate.output_dim(),
            candidate.input_dim()
        )));
    }
    let q_norm = spectral_norm(candidate.q());
    let s_norm = spectral_norm(candidate.s());
    let r_norm = spectral_norm(candidate.r());
    let slack_q = min_eigenvalue(&(candidate.q() - known.q())) - zeta.zeta1 * q_norm * q_norm - zeta.zeta3;
    let slack_r = min_eigenvalue(&(candidate.r() - known.r())) - zeta.zeta2 * s_norm * s_norm - zeta.zeta4 * r_norm * r_norm;
    let s_gap = if candidate.s().is_empty() { 0.0 } else { (candidate.s() - known.s()).amax() };
    Ok(TransferCheck {
        ok: slack_q >= -SLACK_TOLERANCE && slack_r >= -SLACK_TOLERANCE && s_gap <= SLACK_TOLERANCE,
        slacks: [slack_q, slack_r, s_gap],
    })
}

/// Same inequalities with the first component's `(Q₁, S₁, R₁)` known and a
/// candidate for the composed system.
pub fn composition_qsr(first: &QsrTriple, zeta: &TransferConstants, composed: &QsrTriple) -> Result<TransferCheck> {
    transfer_qsr_from_abstraction(first, zeta, composed)
}

/// Largest `x ≥ 0` with `x(1 + k·x) = c`, stable for small `k`.
fn positive_root(k: f64, c: f64) -> f64 {
    if k == 0.0 {
        return c;
    }
    2.0 * c / (1.0 + (1.0 + 4.0 * k * c).sqrt())
}

/// Largest indices satisfying `ρ₁(1 + ζ₁ρ₁) ≤ ρ₂ − ζ₃` and
/// `ν₁(1 + ζ₄ν₁) ≤ ν₂ − ζ₂`. `ζ₁ = 0` or `ζ₄ = 0` gives the linear solution.
pub fn transfer_passivity_indices(rho2: f64, nu2: f64, zeta: &TransferConstants) -> Result<PassivityIndices> {
    if zeta.zeta1 < 0.0 || zeta.zeta4 < 0.0 {
        return Err(Error::InvalidArgument("zeta1 and zeta4 must be ≥ 0".into()));
    }
    let c_rho = rho2 - zeta.zeta3;
    if c_rho <= 0.0 {
        return Err(Error::Precondition(format!("ρ₂ − ζ₃ > 0 fails (ρ₂ = {rho2}, ζ₃ = {})", zeta.zeta3)));
    }
    let c_nu = nu2 - zeta.zeta2;
    if c_nu <= 0.0 {
        return Err(Error::Precondition(format!("ν₂ − ζ₂ > 0 fails (ν₂ = {nu2}, ζ₂ = {})", zeta.zeta2)));
    }
    Ok(PassivityIndices { rho: positive_root(zeta.zeta1, c_rho), nu: positive_root(zeta.zeta4, c_nu) })
}

/// The precision-dependent part of the transfer offset:
/// `ε_y/ζ₁ + ε_y/ζ₂ + (ε_u/ζ₃)‖S₁‖² + ε_u/ζ₄ + max{0, λ_max(−Q₁)}ε_y + max{0, λ_max(−R₁)}ε_u`.
/// The trajectory-dependent terms are not included.
pub fn transfer_offset_constant(qsr1: &QsrTriple, zeta: &TransferConstants, eps_u: f64, eps_y: f64) -> f64 {
    let s_norm = spectral_norm(qsr1.s());
    let neg_q = if qsr1.q().is_empty() { 0.0 } else { max_eigenvalue(&-qsr1.q()).max(0.0) };
    let neg_r = if qsr1.r().is_empty() { 0.0 } else { max_eigenvalue(&-qsr1.r()).max(0.0) };
    eps_y / zeta.zeta1
        + eps_y / zeta.zeta2
        + eps_u / zeta.zeta3 * s_norm * s_norm
        + eps_u / zeta.zeta4
        + neg_q * eps_y
        + neg_r * eps_u
}

/// Smallest shifts `c`, `d` with `(Q₂ + cI, S₂, R₂ + dI)` passing
/// [`transfer_qsr_from_abstraction`], or `None` when a slack cannot be made
/// nonnegative.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferShift {
    pub q_shift: f64,
    pub r_shift: f64,
    pub candidate: QsrTriple,
}

pub fn search_transfer_shift(known: &QsrTriple, zeta: &TransferConstants) -> Result<Option<TransferShift>> {
    let p = known.output_dim();
    let m = known.input_dim();
    let s_norm = spectral_norm(known.s());
    // slack_q(c) = c − ζ₁‖Q₂ + cI‖² − ζ₃ and slack_r(d) likewise; both concave
    let slack_q = |c: f64| {
        let n = spectral_norm(&(known.q() + DMatrix::identity(p, p) * c));
        c - zeta.zeta1 * n * n - zeta.zeta3
    };
    let slack_r = |d: f64| {
        let n = spectral_norm(&(known.r() + DMatrix::identity(m, m) * d));
        d - zeta.zeta2 * s_norm * s_norm - zeta.zeta4 * n * n
    };
    let (Some(c), Some(d)) = (smallest_feasible_shift(slack_q, known.q()), smallest_feasible_shift(slack_r, known.r())) else {
        return Ok(None);
    };
    let candidate =
        QsrTriple::new(known.q() + DMatrix::identity(p, p) * c, known.s().clone(), known.r() + DMatrix::identity(m, m) * d)?;
    Ok(Some(TransferShift { q_shift: c, r_shift: d, candidate }))
}

/// Golden-section for the maximizer of a concave slack, then bisection on
/// its rising side for the smallest nonnegative point.
fn smallest_feasible_shift(slack: impl Fn(f64) -> f64, base: &DMatrix<f64>) -> Option<f64> {
    let scale = 1.0 + spectral_norm(base);
    let (mut lo, mut hi) = (-4.0 * scale, 4.0 * scale);
    // widen until the maximizer is bracketed
    for _ in 0..60 {
        if slack(hi) < slack(hi * 0.5) || hi > 1e12 {
            break;
        }
        hi *= 2.0;
        lo *= 2.0;
    }
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    for _ in 0..200 {
        let x1 = b - ratio * (b - a);
        let x2 = a + ratio * (b - a);
        if slack(x1) < slack(x2) {
            a = x1;
        } else {
            b = x2;
        }
    }
    let peak = 0.5 * (a + b);
    if slack(peak) < 0.0 {
        return None;
    }
    let (mut left, mut right) = (lo, peak);
    if slack(left) >= 0.0 {
        return Some(left);
    }
    for _ in 0..200 {
        let mid = 0.5 * (left + right);
        if slack(mid) >= 0.0 {
            right = mid;
        } else {
            left = mid;
        }
    }
    Some(right)
}
