//! Continuous-time plants, trajectory integration, incremental forward
//! completeness bounds and the input-to-output-rate gain.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, mat_inf_norm, matrix_exponential};

/// `(x, u) ↦ vector`, used for generic vector fields and output maps.
pub type VectorFn = Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>;

#[derive(Clone)]
pub enum Dynamics {
    Linear { a: DMatrix<f64>, b: DMatrix<f64> },
    Nonlinear(VectorFn),
}

#[derive(Clone)]
pub enum OutputMap {
    Linear { c: DMatrix<f64>, d: DMatrix<f64> },
    Nonlinear(VectorFn),
}

impl fmt::Debug for Dynamics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dynamics::Linear { a, b } => f.debug_struct("Linear").field("a", a).field("b", b).finish(),
            Dynamics::Nonlinear(_) => f.write_str("Nonlinear(..)"),
        }
    }
}

impl fmt::Debug for OutputMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OutputMap::Linear { c, d } => f.debug_struct("Linear").field("c", c).field("d", d).finish(),
            OutputMap::Nonlinear(_) => f.write_str("Nonlinear(..)"),
        }
    }
}

/// Which signal the abstraction is related through.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementMode {
    /// The measured output is the state itself.
    StateMeasured,
    /// The measured output coincides with the system output.
    OutputMeasured,
}

/// Axis-aligned box `Π [lower_i, upper_i]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxSet {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxSet {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension(format!("box bounds have {} lower and {} upper entries", lower.len(), upper.len())));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::NonFinite("box bounds"));
            }
            if lo > hi {
                return Err(Error::InvalidArgument(format!("axis {i}: lower bound {lo} exceeds upper bound {hi}")));
            }
        }
        Ok(Self { lower, upper })
    }

    /// `[-w_i, w_i]` on every axis.
    pub fn symmetric(half_widths: &[f64]) -> Result<Self> {
        Self::new(half_widths.iter().map(|w| -w).collect(), half_widths.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (lo, hi))| lo <= v && v <= hi)
    }

    /// All `2^n` corners.
    pub fn vertices(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        (0..1usize << n)
            .map(|mask| (0..n).map(|i| if mask >> i & 1 == 1 { self.upper[i] } else { self.lower[i] }).collect())
            .collect()
    }
}

/// A plant `ẋ = f(x, u)`, `y = h(x, u)` on a bounded working region.
#[derive(Clone, Debug)]
pub struct ContinuousSystem {
    n: usize,
    m: usize,
    p: usize,
    dynamics: Dynamics,
    output: OutputMap,
    measurement: MeasurementMode,
    k1: f64,
    k2: f64,
    domain: BoxSet,
    input_set: BoxSet,
}

impl ContinuousSystem {
    /// Linear plant. The output Lipschitz constants default to the induced
    /// ∞-norms of `C` and `D`.
    pub fn lti(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
        measurement: MeasurementMode,
        domain: BoxSet,
        input_set: BoxSet,
    ) -> Result<Self> {
        let n = a.nrows();
        let m = b.ncols();
        let p = c.nrows();
        let dims_ok = a.ncols() == n && b.nrows() == n && c.ncols() == n && d.nrows() == p && d.ncols() == m;
        if !dims_ok {
            return Err(Error::Dimension(format!(
                "A {}x{}, B {}x{}, C {}x{}, D {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols(),
                c.nrows(),
                c.ncols(),
                d.nrows(),
                d.ncols()
            )));
        }
        if [&a, &b, &c, &d].iter().any(|mat| mat.iter().any(|x| !x.is_finite())) {
            return Err(Error::NonFinite("system matrices"));
        }
        let k1 = mat_inf_norm(&c);
        let k2 = mat_inf_norm(&d);
        Self::assemble(n, m, p, Dynamics::Linear { a, b }, OutputMap::Linear { c, d }, measurement, k1, k2, domain, input_set)
    }

    /// Generic plant. `k1`, `k2` must bound `‖h(x₁,u₁) − h(x₂,u₂)‖∞` by
    /// `k1‖x₁ − x₂‖∞ + k2‖u₁ − u₂‖∞`.
    #[allow(clippy::too_many_arguments)]
    pub fn nonlinear(
        dims: (usize, usize, usize),
        f: VectorFn,
        h: VectorFn,
        measurement: MeasurementMode,
        k1: f64,
        k2: f64,
        domain: BoxSet,
        input_set: BoxSet,
    ) -> Result<Self> {
        let (n, m, p) = dims;
        Self::assemble(n, m, p, Dynamics::Nonlinear(f), OutputMap::Nonlinear(h), measurement, k1, k2, domain, input_set)
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        n: usize,
        m: usize,
        p: usize,
        dynamics: Dynamics,
        output: OutputMap,
        measurement: MeasurementMode,
        k1: f64,
        k2: f64,
        domain: BoxSet,
        input_set: BoxSet,
    ) -> Result<Self> {
        if domain.dim() != n {
            return Err(Error::Dimension(format!("domain has {} axes, state dimension is {n}", domain.dim())));
        }
        if input_set.dim() != m {
            return Err(Error::Dimension(format!("input set has {} axes, input dimension is {m}", input_set.dim())));
        }
        if !input_set.contains(&vec![0.0; m]) {
            return Err(Error::InvalidArgument("input set must contain the zero input".into()));
        }
        if !(k1 >= 0.0 && k2 >= 0.0 && k1.is_finite() && k2.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "output Lipschitz constants must be finite and nonnegative (K1 = {k1}, K2 = {k2})"
            )));
        }
        Ok(Self { n, m, p, dynamics, output, measurement, k1, k2, domain, input_set })
    }

    pub fn with_output_lipschitz(mut self, k1: f64, k2: f64) -> Self {
        self.k1 = k1;
        self.k2 = k2;
        self
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn input_dim(&self) -> usize {
        self.m
    }

    pub fn output_dim(&self) -> usize {
        self.p
    }

    pub fn measurement(&self) -> MeasurementMode {
        self.measurement
    }

    pub fn k1(&self) -> f64 {
        self.k1
    }

    pub fn k2(&self) -> f64 {
        self.k2
    }

    pub fn domain(&self) -> &BoxSet {
        &self.domain
    }

    pub fn input_set(&self) -> &BoxSet {
        &self.input_set
    }

    pub fn dynamics(&self) -> &Dynamics {
        &self.dynamics
    }

    pub fn output_map(&self) -> &OutputMap {
        &self.output
    }

    /// `(A, B, C, D)` when both dynamics and output are linear.
    pub fn lti_matrices(&self) -> Option<(&DMatrix<f64>, &DMatrix<f64>, &DMatrix<f64>, &DMatrix<f64>)> {
        match (&self.dynamics, &self.output) {
            (Dynamics::Linear { a, b }, OutputMap::Linear { c, d }) => Some((a, b, c, d)),
            _ => None,
        }
    }

    pub fn vector_field(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        match &self.dynamics {
            Dynamics::Linear { a, b } => a * x + b * u,
            Dynamics::Nonlinear(f) => f(x, u),
        }
    }

    /// System output `h(x, u)`.
    pub fn output(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        match &self.output {
            OutputMap::Linear { c, d } => c * x + d * u,
            OutputMap::Nonlinear(h) => h(x, u),
        }
    }

    pub fn measured_output(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        match self.measurement {
            MeasurementMode::StateMeasured => x.clone(),
            MeasurementMode::OutputMeasured => self.output(x, u),
        }
    }

    /// Classical RK4 with fixed step `h` under the constant input `u`.
    ///
    /// The last step is shortened so the integration ends exactly at `t`.
    pub fn integrate(&self, x0: &DVector<f64>, u: &DVector<f64>, t: f64, h: f64) -> Result<DVector<f64>> {
        if x0.len() != self.n || u.len() != self.m {
            return Err(Error::Dimension(format!(
                "state has {} entries (expected {}), input has {} (expected {})",
                x0.len(),
                self.n,
                u.len(),
                self.m
            )));
        }
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::InvalidArgument(format!("integration horizon must be ≥ 0, got {t}")));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidArgument(format!("step size must be > 0, got {h}")));
        }
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("initial state"));
        }
        let mut x = x0.clone();
        let mut time = 0.0;
        let eps = 1e-12 * t.max(1.0);
        loop {
            let remaining = t - time;
            if remaining <= eps {
                break;
            }
            let dt = if remaining < h * (1.0 + 1e-9) { remaining } else { h };
            let k1 = self.vector_field(&x, u);
            let k2 = self.vector_field(&(&x + &k1 * (0.5 * dt)), u);
            let k3 = self.vector_field(&(&x + &k2 * (0.5 * dt)), u);
            let k4 = self.vector_field(&(&x + &k3 * dt), u);
            x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
            time += dt;
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { time });
            }
        }
        Ok(x)
    }

    /// `integrate` with the default step `t / 100`.
    pub fn flow(&self, x0: &DVector<f64>, u: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        if t == 0.0 {
            return self.integrate(x0, u, 0.0, 1.0);
        }
        self.integrate(x0, u, t, t / DEFAULT_STEPS_PER_SAMPLE)
    }
}

/// RK4 steps per sampling period used by [`ContinuousSystem::flow`].
pub const DEFAULT_STEPS_PER_SAMPLE: f64 = 100.0;

/// Incremental forward completeness bounds:
/// `‖ξ(t,x₁,v₁) − ξ(t,x₂,v₂)‖∞ ≤ α₁(‖x₁−x₂‖∞, t) + α₂(‖v₁−v₂‖∞, t)`.
pub trait IfcBounds: Send + Sync {
    fn alpha1(&self, r: f64, t: f64) -> f64;
    fn alpha2(&self, r: f64, t: f64) -> f64;
}

/// Closed-form bounds for `ẋ = Ax + Bu` under constant inputs:
/// `α₁(r,t) = ‖e^{At}‖∞ r` and `α₂(r,t) = r ∫₀ᵗ ‖e^{As}B‖∞ ds`.
#[derive(Clone, Debug)]
pub struct LtiIfcBounds {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    // (state gain, input gain) keyed by the bits of t; callers query a few sample times
    gains: Arc<Mutex<HashMap<u64, (f64, f64)>>>,
}

/// Simpson panels for the input-gain integral (must be even).
pub const IFC_SIMPSON_PANELS: usize = 256;

impl LtiIfcBounds {
    /// `‖e^{At}‖∞`.
    pub fn state_gain(&self, t: f64) -> f64 {
        matrix_exponential(&self.a, t).map_or(f64::INFINITY, |e| mat_inf_norm(&e))
    }

    /// `∫₀ᵗ ‖e^{As}B‖∞ ds` by composite Simpson.
    pub fn input_gain(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let panels = IFC_SIMPSON_PANELS;
        let h = t / panels as f64;
        let integrand = |s: f64| matrix_exponential(&self.a, s).map_or(f64::INFINITY, |e| mat_inf_norm(&(e * &self.b)));
        let mut sum = integrand(0.0) + integrand(t);
        for k in 1..panels {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            sum += w * integrand(k as f64 * h);
        }
        sum * h / 3.0
    }
}

impl LtiIfcBounds {
    fn gains(&self, t: f64) -> (f64, f64) {
        let key = t.to_bits();
        if let Some(&g) = self.gains.lock().unwrap_or_else(|e| e.into_inner()).get(&key) {
            return g;
        }
        let g = (self.state_gain(t), self.input_gain(t));
        self.gains.lock().unwrap_or_else(|e| e.into_inner()).insert(key, g);
        g
    }
}

impl IfcBounds for LtiIfcBounds {
    fn alpha1(&self, r: f64, t: f64) -> f64 {
        if r == 0.0 {
            return 0.0;
        }
        self.gains(t).0 * r
    }

    fn alpha2(&self, r: f64, t: f64) -> f64 {
        if r == 0.0 {
            return 0.0;
        }
        self.gains(t).1 * r
    }
}

pub fn lti_ifc_bounds(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<LtiIfcBounds> {
    if !a.is_square() || b.nrows() != a.nrows() {
        return Err(Error::Dimension(format!("A is {}x{}, B is {}x{}", a.nrows(), a.ncols(), b.nrows(), b.ncols())));
    }
    if a.iter().chain(b.iter()).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("A or B"));
    }
    Ok(LtiIfcBounds { a: a.clone(), b: b.clone(), gains: Arc::default() })
}

type BoundFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// User-supplied bounds for plants without a closed form.
#[derive(Clone)]
pub struct FnIfcBounds {
    alpha1: BoundFn,
    alpha2: BoundFn,
}

impl FnIfcBounds {
    pub fn new(alpha1: BoundFn, alpha2: BoundFn) -> Self {
        Self { alpha1, alpha2 }
    }
}

impl IfcBounds for FnIfcBounds {
    fn alpha1(&self, r: f64, t: f64) -> f64 {
        (self.alpha1)(r, t)
    }

    fn alpha2(&self, r: f64, t: f64) -> f64 {
        (self.alpha2)(r, t)
    }
}

/// Bounds linear in `r` with gains tabulated against time and interpolated
/// linearly in between. Rows are `(t, state_gain, input_gain)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TabulatedIfcBounds {
    rows: Vec<(f64, f64, f64)>,
}

impl TabulatedIfcBounds {
    pub fn new(mut rows: Vec<(f64, f64, f64)>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidArgument("empty bound table".into()));
        }
        if rows.iter().any(|&(t, g1, g2)| !(t >= 0.0 && g1 >= 0.0 && g2 >= 0.0)) {
            return Err(Error::InvalidArgument("bound table entries must be nonnegative".into()));
        }
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self { rows })
    }

    fn gains(&self, t: f64) -> (f64, f64) {
        let rows = &self.rows;
        let last = rows[rows.len() - 1];
        if t <= rows[0].0 {
            return (rows[0].1, rows[0].2);
        }
        if t >= last.0 {
            return (last.1, last.2);
        }
        let k = rows.partition_point(|r| r.0 <= t);
        let (lo, hi) = (rows[k - 1], rows[k]);
        let w = (t - lo.0) / (hi.0 - lo.0);
        (lo.1 + w * (hi.1 - lo.1), lo.2 + w * (hi.2 - lo.2))
    }
}

impl IfcBounds for TabulatedIfcBounds {
    fn alpha1(&self, r: f64, t: f64) -> f64 {
        self.gains(t).0 * r
    }

    fn alpha2(&self, r: f64, t: f64) -> f64 {
        self.gains(t).1 * r
    }
}

/// Peak of `σ_max(CA(jωI − A)⁻¹B + CB)`, the gain from a piecewise-constant
/// input to the output rate `ẏ = CAx + CBu`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainEstimate {
    pub gamma: f64,
    /// `None` when the supremum is only reached as `ω → ∞`.
    pub peak_frequency: Option<f64>,
    /// `‖CB‖₂`, the value approached as `ω → ∞`.
    pub high_frequency_limit: f64,
}

pub const GAIN_GRID_POINTS: usize = 481;
pub const GAIN_OMEGA_MIN: f64 = 1e-4;
pub const GAIN_OMEGA_MAX: f64 = 1e4;

pub fn l2_gain_u_to_ydot(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, d: &DMatrix<f64>) -> Result<GainEstimate> {
    let n = a.nrows();
    if !a.is_square() || b.nrows() != n || c.ncols() != n || d.nrows() != c.nrows() || d.ncols() != b.ncols() {
        return Err(Error::Dimension("inconsistent (A, B, C, D) for gain estimate".into()));
    }
    if n > 0 {
        let max_real_part = a.clone().complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
        if max_real_part >= 0.0 {
            return Err(Error::NotHurwitz { max_real_part });
        }
    }
    let ca = c * a;
    let cb = c * b;
    let high_frequency_limit = linalg::spectral_norm(&cb);

    let to_c = |m: &DMatrix<f64>| m.map(|x| Complex64::new(x, 0.0));
    let (ac, bc, cac, cbc) = (to_c(a), to_c(b), to_c(&ca), to_c(&cb));
    let response = |omega: f64| -> f64 {
        let mut shifted = -ac.clone();
        for i in 0..n {
            shifted[(i, i)] += Complex64::new(0.0, omega);
        }
        let g = match shifted.lu().solve(&bc) {
            Some(x) => &cac * x + &cbc,
            None => return f64::INFINITY,
        };
        linalg::complex_spectral_norm(&g)
    };

    let (lo, hi) = (GAIN_OMEGA_MIN.log10(), GAIN_OMEGA_MAX.log10());
    let log_grid: Vec<f64> = (0..GAIN_GRID_POINTS).map(|k| lo + (hi - lo) * k as f64 / (GAIN_GRID_POINTS - 1) as f64).collect();
    let values: Vec<f64> = log_grid.iter().map(|&l| response(10f64.powf(l))).collect();
    let best = (0..values.len()).max_by(|&i, &j| values[i].total_cmp(&values[j])).unwrap_or(0);

    // golden-section in log-frequency between the neighbours of the grid peak
    let mut left = log_grid[best.saturating_sub(1)];
    let mut right = log_grid[(best + 1).min(log_grid.len() - 1)];
    let mut peak = (values[best], log_grid[best]);
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = right - ratio * (right - left);
    let mut x2 = left + ratio * (right - left);
    let mut f1 = response(10f64.powf(x1));
    let mut f2 = response(10f64.powf(x2));
    for _ in 0..60 {
        if f1 > f2 {
            right = x2;
            x2 = x1;
            f2 = f1;
            x1 = right - ratio * (right - left);
            f1 = response(10f64.powf(x1));
        } else {
            left = x1;
            x1 = x2;
            f1 = f2;
            x2 = left + ratio * (right - left);
            f2 = response(10f64.powf(x2));
        }
        for (f, x) in [(f1, x1), (f2, x2)] {
            if f > peak.0 {
                peak = (f, x);
            }
        }
    }
    // the supremum may only be approached as ω → ∞
    if high_frequency_limit >= peak.0 {
        return Ok(GainEstimate { gamma: high_frequency_limit, peak_frequency: None, high_frequency_limit });
    }
    Ok(GainEstimate { gamma: peak.0, peak_frequency: Some(10f64.powf(peak.1)), high_frequency_limit })
}
