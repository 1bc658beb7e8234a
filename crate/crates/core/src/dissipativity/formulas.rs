//! Supply-rate matrices certified for a quantized abstraction from those of
//! the plant, given the sampling period `τ` and the output-rate gain `γ`.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::QsrTriple;
use crate::error::{Error, Result};
use crate::linalg::spectral_norm;

/// Which closed form to use for output-measured abstractions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormulaMode {
    /// General matrix formula with the squared-norm `Q` correction.
    Theorem,
    /// Scalar passivity formula with the `|1 − ρ + τρ(τγ+1)|` term and a
    /// `½` cross-term constant.
    #[serde(rename = "example2compat", alias = "example2_compat")]
    Example2Compat,
}

impl FormulaMode {
    pub fn tag(self) -> &'static str {
        match self {
            FormulaMode::Theorem => "theorem",
            FormulaMode::Example2Compat => "example2compat",
        }
    }
}

impl fmt::Display for FormulaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

fn check_tau_gamma(tau: f64, gamma: f64) -> Result<()> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::InvalidArgument(format!("tau must be ≥ 0, got {tau}")));
    }
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidArgument(format!("gamma must be ≥ 0, got {gamma}")));
    }
    Ok(())
}

/// State-measured abstraction:
/// `Q' = Q + τ‖Q‖(τγ+1)I`, `S' = S`,
/// `R' = R + τγ‖S‖I + τγ‖Q‖(τ²γ+τ+γ)I`.
pub fn abstraction_qsr_state_measured(qsr: &QsrTriple, tau: f64, gamma: f64) -> Result<QsrTriple> {
    check_tau_gamma(tau, gamma)?;
    let (p, m) = (qsr.output_dim(), qsr.input_dim());
    let qn = spectral_norm(qsr.q());
    let sn = spectral_norm(qsr.s());
    let q = qsr.q() + DMatrix::identity(p, p) * (tau * qn * (tau * gamma + 1.0));
    let r_shift = tau * gamma * sn + tau * gamma * qn * (tau * tau * gamma + tau + gamma);
    let r = qsr.r() + DMatrix::identity(m, m) * r_shift;
    QsrTriple::new(q, qsr.s().clone(), r)
}

/// Output-measured abstraction. `m` is the input dimension entering the
/// `γ√(mτ)μ` quantization term.
pub fn abstraction_qsr_output_measured(
    qsr: &QsrTriple,
    tau: f64,
    gamma: f64,
    mu: f64,
    m: usize,
    mode: FormulaMode,
) -> Result<QsrTriple> {
    check_tau_gamma(tau, gamma)?;
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(Error::InvalidArgument(format!("mu must be ≥ 0, got {mu}")));
    }
    if m == 0 {
        return Err(Error::InvalidArgument("input dimension must be ≥ 1".into()));
    }
    let quantization = gamma * (m as f64 * tau).sqrt() * mu + gamma * gamma * tau;
    match mode {
        FormulaMode::Theorem => {
            let (p, mi) = (qsr.output_dim(), qsr.input_dim());
            let qn = spectral_norm(qsr.q());
            let sn = spectral_norm(qsr.s());
            let shifted = qsr.q() + DMatrix::identity(p, p) * (tau * qn * (tau * gamma + 1.0));
            let sq = spectral_norm(&shifted);
            let q = &shifted + DMatrix::identity(p, p) * (sq * sq);
            let r_shift = tau * gamma * qn * (tau * tau * gamma + tau + gamma) + sn * sn + quantization;
            let r = qsr.r() + DMatrix::identity(mi, mi) * r_shift;
            QsrTriple::new(q, qsr.s().clone(), r)
        }
        FormulaMode::Example2Compat => {
            let idx = qsr
                .as_passivity()
                .ok_or_else(|| Error::Unsupported("example2compat formulas apply to passivity-form supply rates only".into()))?;
            let (rho, nu) = (idx.rho, idx.nu);
            let drift = tau * rho * (tau * gamma + 1.0);
            let rho_new = rho - drift - (1.0 - rho + drift).abs();
            let nu_new = nu - 0.5 - tau * gamma * rho * (tau * tau * gamma + tau + gamma) - quantization;
            Ok(QsrTriple::passivity(rho_new, nu_new, qsr.output_dim()))
        }
    }
}
