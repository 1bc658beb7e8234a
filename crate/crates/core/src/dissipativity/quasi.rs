//! Exhaustive per-transition check of quasi-dissipativity on a finite
//! abstraction: `τ·ω(ℓ, y) − τ·(V(p) − V(q)) + τ·β ≥ 0` for every `q →ℓ p`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{supply_rate_unchecked, FormulaMode, PassivityIndices, QsrTriple, StorageFunction};
use crate::abstraction::RadiusMode;
use crate::error::{Error, Result};
use crate::systems::BoxSet;
use crate::transition::FiniteTransitionSystem;

/// Margins at or above `-MARGIN_TOLERANCE` pass.
pub const MARGIN_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionMargin {
    pub state: usize,
    pub input: usize,
    pub successor: usize,
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuasiCertificate {
    pub qsr: QsrTriple,
    pub storage: StorageFunction,
    pub beta: f64,
    pub tau: f64,
    /// Ordered by (state, input, successor).
    pub margins: Vec<TransitionMargin>,
    /// `None` when there is no transition to check.
    pub min_margin: Option<f64>,
    pub checked: usize,
    pub verdict: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub formula_mode: Option<FormulaMode>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub radius_mode: Option<RadiusMode>,
}

impl QuasiCertificate {
    pub fn with_modes(mut self, formula_mode: Option<FormulaMode>, radius_mode: Option<RadiusMode>) -> Self {
        self.formula_mode = formula_mode;
        self.radius_mode = radius_mode;
        self
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// How the per-step offset `β` is chosen from the storage Lipschitz bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaPolicy {
    /// `β = Lη/(2τ)`: successor within half a cell of the exact sample.
    HalfCell,
    /// `β = L·r/τ`: successor anywhere inside the successor radius `r`.
    Radius,
}

pub fn default_beta(policy: BetaPolicy, lipschitz: f64, eta: f64, radius: f64, tau: f64) -> f64 {
    match policy {
        BetaPolicy::HalfCell => lipschitz * eta / (2.0 * tau),
        BetaPolicy::Radius => lipschitz * radius / tau,
    }
}

/// `max ‖Px‖₁` over the given points and the corners of `domain`, a bound on
/// the ∞-norm Lipschitz constant of `½xᵀPx` over their convex hull.
pub fn lipschitz_bound(p: &DMatrix<f64>, points: &[Vec<f64>], domain: Option<&BoxSet>) -> f64 {
    let corners = domain.map(BoxSet::vertices).unwrap_or_default();
    points
        .iter()
        .chain(corners.iter())
        .filter(|x| x.len() == p.ncols())
        .map(|x| (0..p.nrows()).map(|i| (0..p.ncols()).map(|j| p[(i, j)] * x[j]).sum::<f64>().abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn check_dims(ts: &FiniteTransitionSystem, qsr: &QsrTriple, storage: &StorageFunction) -> Result<()> {
    if ts.num_states() == 0 {
        return Ok(());
    }
    let n = ts.state(0).len();
    if storage.p().nrows() != n {
        return Err(Error::Dimension(format!("storage matrix is {0}x{0}, states have {n} entries", storage.p().nrows())));
    }
    if ts.num_inputs() == 0 {
        return Ok(());
    }
    let m = ts.input(0).len();
    let p = ts.system_output(0, 0).len();
    if p == 0 && qsr.output_dim() > 0 {
        return Err(Error::InvalidArgument("transition system carries no system output".into()));
    }
    if qsr.input_dim() != m || qsr.output_dim() != p {
        return Err(Error::Dimension(format!(
            "supply rate for {} outputs and {} inputs, system has {p} and {m}",
            qsr.output_dim(),
            qsr.input_dim()
        )));
    }
    Ok(())
}

/// Checks every transition `q →ℓ p` (each successor of a nondeterministic
/// cell separately) with `y` the system output at `(q, ℓ)`.
pub fn verify_quasi_dissipativity(
    ts: &FiniteTransitionSystem,
    qsr: &QsrTriple,
    storage: &StorageFunction,
    beta: f64,
) -> Result<QuasiCertificate> {
    let tau = ts.tau();
    check_dims(ts, qsr, storage)?;
    if !beta.is_finite() {
        return Err(Error::NonFinite("beta"));
    }
    let transitions: Vec<(usize, usize, usize)> = ts.transitions().collect();
    let margins: Vec<TransitionMargin> = transitions
        .par_iter()
        .map(|&(s, i, t)| {
            let omega = supply_rate_unchecked(qsr, ts.input(i), ts.system_output(s, i));
            let dv = storage.value(ts.state(t)) - storage.value(ts.state(s));
            TransitionMargin { state: s, input: i, successor: t, margin: tau * omega - tau * dv + tau * beta }
        })
        .collect();
    let min_margin = margins.iter().map(|m| m.margin).reduce(f64::min);
    Ok(QuasiCertificate {
        qsr: qsr.clone(),
        storage: storage.clone(),
        beta,
        tau,
        checked: margins.len(),
        verdict: min_margin.is_none_or(|m| m >= -MARGIN_TOLERANCE),
        min_margin,
        margins,
        formula_mode: None,
        radius_mode: None,
    })
}

/// The same margins assembled from the block matrices
/// `F = cP − ρτCᵀC`, `G = (τ/2)C − ρτDᵀC`, `H = (τ/2)(D+Dᵀ) − ρτDᵀD − ντI`
/// with `c = τ·scale`, as `qᵀFq + 2ℓᵀGq + ℓᵀHℓ + τβ − c·pᵀPp`. Values are
/// listed input-major, then by state, then by successor.
pub fn kron_batch_check(
    ts: &FiniteTransitionSystem,
    indices: PassivityIndices,
    c: &DMatrix<f64>,
    d: &DMatrix<f64>,
    storage: &StorageFunction,
    beta: f64,
) -> Result<Vec<f64>> {
    let tau = ts.tau();
    let n = storage.p().nrows();
    let outputs = c.nrows();
    let m = d.ncols();
    if c.ncols() != n || d.nrows() != outputs || outputs != m {
        return Err(Error::Dimension(format!(
            "passivity blocks need square D and C with {n} columns; got C {}x{}, D {}x{}",
            c.nrows(),
            c.ncols(),
            d.nrows(),
            d.ncols()
        )));
    }
    if ts.num_states() > 0 && ts.state(0).len() != n {
        return Err(Error::Dimension("storage matrix does not match the state dimension".into()));
    }
    if ts.num_inputs() > 0 && ts.input(0).len() != m {
        return Err(Error::Dimension("D does not match the input dimension".into()));
    }
    let (rho, nu) = (indices.rho, indices.nu);
    let half = tau * storage.scale();
    let p = storage.p();
    let f = p * half - c.transpose() * c * (rho * tau);
    let g = c * (tau / 2.0) - d.transpose() * c * (rho * tau);
    let h = (d + d.transpose()) * (tau / 2.0) - d.transpose() * d * (rho * tau) - DMatrix::identity(m, m) * (nu * tau);
    let form = |mat: &DMatrix<f64>, a: &[f64], b: &[f64]| -> f64 {
        let mut acc = 0.0;
        for (i, ai) in a.iter().enumerate() {
            for (j, bj) in b.iter().enumerate() {
                acc += ai * mat[(i, j)] * bj;
            }
        }
        acc
    };
    let mut out = Vec::with_capacity(ts.num_transitions());
    for j in 0..ts.num_inputs() {
        let l = ts.input(j);
        for i in 0..ts.num_states() {
            let q = ts.state(i);
            let head = form(&f, q, q) + 2.0 * form(&g, l, q) + form(&h, l, l) + tau * beta;
            for &succ in ts.successors(i, j) {
                let x = ts.state(succ);
                out.push(head - half * form(p, x, x));
            }
        }
    }
    Ok(out)
}
