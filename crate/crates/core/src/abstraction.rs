//! Quantized abstractions of sampled plants and the precision-parameter
//! conditions that make them approximate simulations of the plant.

use std::fmt;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::inf_dist;
use crate::systems::{ContinuousSystem, IfcBounds, MeasurementMode};
use crate::transition::{build_grid, quantize, quantize_index, FiniteTransitionSystem, GridSpec};

/// Relative slack on radius comparisons so that exact geometric ties are
/// decided the same way regardless of rounding in the successor.
pub const RADIUS_TIE_TOLERANCE: f64 = 1e-9;

/// Slack on the precision inequalities.
const PARAM_TOLERANCE: f64 = 1e-12;

/// How the successor radius is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusMode {
    /// `‖ξ − x'‖ ≤ α₁(θ₁,τ) + α₂(θ₂,τ) + η/2`.
    Spec,
    /// `‖ξ − x'‖ < η`.
    Figure,
}

impl RadiusMode {
    pub fn tag(self) -> &'static str {
        match self {
            RadiusMode::Spec => "spec",
            RadiusMode::Figure => "figure",
        }
    }
}

impl fmt::Display for RadiusMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbstractionParams {
    pub tau: f64,
    pub eta: f64,
    pub mu: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub eps_u: f64,
    pub eps_y: f64,
    pub radius_mode: RadiusMode,
}

impl AbstractionParams {
    pub fn check_positive(&self) -> Result<()> {
        let fields = [
            ("tau", self.tau),
            ("eta", self.eta),
            ("mu", self.mu),
            ("theta1", self.theta1),
            ("theta2", self.theta2),
            ("eps_u", self.eps_u),
            ("eps_y", self.eps_y),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// A failed precision inequality `lhs ≤ rhs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub inequality: String,
    pub lhs: f64,
    pub rhs: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} fails ({} > {})", self.inequality, self.lhs, self.rhs)
    }
}

fn require(out: &mut Vec<Violation>, inequality: &str, lhs: f64, rhs: f64) {
    if lhs > rhs + PARAM_TOLERANCE * rhs.abs().max(1.0) {
        out.push(Violation { inequality: inequality.to_string(), lhs, rhs });
    }
}

/// `η/2 ≤ ε_y ≤ θ₁` and `μ/2 ≤ ε_u ≤ θ₂`. Empty means valid.
pub fn validate_state_measured(p: &AbstractionParams) -> Vec<Violation> {
    let mut out = Vec::new();
    require(&mut out, "η/2 ≤ ε_y", p.eta / 2.0, p.eps_y);
    require(&mut out, "ε_y ≤ θ₁", p.eps_y, p.theta1);
    require(&mut out, "μ/2 ≤ ε_u", p.mu / 2.0, p.eps_u);
    require(&mut out, "ε_u ≤ θ₂", p.eps_u, p.theta2);
    out
}

/// `K₁η/2 + (K₂+1)μ/2 ≤ ε_y`, `η/2 ≤ θ₁` and `μ/2 ≤ ε_u ≤ θ₂`.
pub fn validate_output_measured(p: &AbstractionParams, k1: f64, k2: f64) -> Vec<Violation> {
    let mut out = Vec::new();
    require(&mut out, "K₁η/2 + (K₂+1)μ/2 ≤ ε_y", k1 * p.eta / 2.0 + (k2 + 1.0) * p.mu / 2.0, p.eps_y);
    require(&mut out, "η/2 ≤ θ₁", p.eta / 2.0, p.theta1);
    require(&mut out, "μ/2 ≤ ε_u", p.mu / 2.0, p.eps_u);
    require(&mut out, "ε_u ≤ θ₂", p.eps_u, p.theta2);
    out
}

/// The check matching the plant's measurement mode.
pub fn validate_for(sys: &ContinuousSystem, p: &AbstractionParams) -> Vec<Violation> {
    match sys.measurement() {
        MeasurementMode::StateMeasured => validate_state_measured(p),
        MeasurementMode::OutputMeasured => validate_output_measured(p, sys.k1(), sys.k2()),
    }
}

/// Successor radius for the given mode.
pub fn successor_radius(ifc: &dyn IfcBounds, p: &AbstractionParams) -> f64 {
    match p.radius_mode {
        RadiusMode::Spec => ifc.alpha1(p.theta1, p.tau) + ifc.alpha2(p.theta2, p.tau) + p.eta / 2.0,
        RadiusMode::Figure => p.eta,
    }
}

/// `ξ(τ, x, u)` under the input held constant on `[0, τ)`.
pub fn sampled_successor(sys: &ContinuousSystem, x: &DVector<f64>, u: &DVector<f64>, tau: f64) -> Result<DVector<f64>> {
    sys.flow(x, u, tau)
}

#[derive(Clone, Debug)]
pub struct Abstraction {
    pub ts: FiniteTransitionSystem,
    pub state_grid: GridSpec,
    pub input_grid: GridSpec,
    pub radius: f64,
    pub radius_mode: RadiusMode,
    /// States with no successor under any input.
    pub warnings: Vec<String>,
}

impl Abstraction {
    /// Index of the grid state equal to `quantize(x, η)`, if inside the domain.
    pub fn state_index_of(&self, x: &[f64]) -> Option<usize> {
        let ks: Vec<i64> = x.iter().map(|&v| quantize_index(v, self.state_grid.step)).collect();
        self.state_grid.index_of(&ks)
    }

    pub fn input_index_of(&self, u: &[f64]) -> Option<usize> {
        let ks: Vec<i64> = u.iter().map(|&v| quantize_index(v, self.input_grid.step)).collect();
        self.input_grid.index_of(&ks)
    }
}

/// Builds the quantized abstraction: states `[X]_η`, inputs `[U]_μ`, and
/// `Post_u(x)` = grid states within the successor radius of `ξ(τ, x, u)`.
/// Successors outside the domain are dropped.
pub fn build_abstraction(sys: &ContinuousSystem, ifc: &dyn IfcBounds, params: &AbstractionParams) -> Result<Abstraction> {
    params.check_positive()?;
    let violations = validate_for(sys, params);
    if !violations.is_empty() {
        return Err(Error::InvalidParameters(violations));
    }
    let state_grid = GridSpec::new(params.eta, sys.domain().lower.clone(), sys.domain().upper.clone())?;
    let input_grid = GridSpec::new(params.mu, sys.input_set().lower.clone(), sys.input_set().upper.clone())?;
    let states = build_grid(&state_grid)?;
    let inputs = build_grid(&input_grid)?;
    let radius = successor_radius(ifc, params);
    if !(radius.is_finite() && radius >= 0.0) {
        return Err(Error::InvalidArgument(format!("successor radius is {radius}")));
    }
    let (ns, ni) = (states.len(), inputs.len());

    struct Cell {
        post: Vec<usize>,
        measured: Vec<f64>,
        system: Vec<f64>,
    }
    let cells: Vec<Cell> = (0..ns * ni)
        .into_par_iter()
        .map(|cell| -> Result<Cell> {
            let (s, i) = (cell / ni, cell % ni);
            let x = DVector::from_column_slice(&states[s]);
            let u = DVector::from_column_slice(&inputs[i]);
            let xi = sampled_successor(sys, &x, &u, params.tau)?;
            let post = successors_within(&state_grid, &states, xi.as_slice(), radius, params.radius_mode);
            let h = sys.output(&x, &u);
            let (measured, system) = match sys.measurement() {
                MeasurementMode::StateMeasured => (states[s].clone(), h.as_slice().to_vec()),
                MeasurementMode::OutputMeasured => {
                    let hq = quantize(h.as_slice(), params.mu);
                    (hq.clone(), hq)
                }
            };
            Ok(Cell { post, measured, system })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut post = vec![Vec::with_capacity(ni); ns];
    let mut measured = vec![Vec::with_capacity(ni); ns];
    let mut system = vec![Vec::with_capacity(ni); ns];
    for (cell, c) in cells.into_iter().enumerate() {
        let s = cell / ni;
        post[s].push(c.post);
        measured[s].push(c.measured);
        system[s].push(c.system);
    }
    let ts = FiniteTransitionSystem::from_parts(states, inputs, post, measured, system, params.tau)?;
    let warnings = (0..ns)
        .filter(|&s| ts.enabled_inputs(s).next().is_none())
        .map(|s| {
            format!("state {} has no successor inside the domain under any input", crate::transition::format_vector(ts.state(s)))
        })
        .collect();
    Ok(Abstraction { ts, state_grid, input_grid, radius, radius_mode: params.radius_mode, warnings })
}

/// Grid indices within `radius` of `center`, enumerating only the integer
/// neighbourhood of the ball.
fn successors_within(grid: &GridSpec, states: &[Vec<f64>], center: &[f64], radius: f64, mode: RadiusMode) -> Vec<usize> {
    let step = grid.step;
    let mut ranges = Vec::with_capacity(grid.dim());
    for (axis, &c) in center.iter().enumerate() {
        let (gmin, gmax) = grid.axis_range(axis);
        let lo = (((c - radius) / step).floor() as i64).max(gmin);
        let hi = (((c + radius) / step).ceil() as i64).min(gmax);
        if lo > hi {
            return Vec::new();
        }
        ranges.push((lo, hi));
    }
    let accept = |d: f64| match mode {
        RadiusMode::Spec => d <= radius * (1.0 + RADIUS_TIE_TOLERANCE),
        RadiusMode::Figure => d < radius * (1.0 - RADIUS_TIE_TOLERANCE),
    };
    let mut out = Vec::new();
    let mut ks: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    loop {
        if let Some(idx) = grid.index_of(&ks) {
            if accept(inf_dist(&states[idx], center)) {
                out.push(idx);
            }
        }
        // odometer increment, last axis fastest
        let mut axis = ks.len();
        loop {
            if axis == 0 {
                out.sort_unstable();
                return out;
            }
            axis -= 1;
            if ks[axis] < ranges[axis].1 {
                ks[axis] += 1;
                break;
            }
            ks[axis] = ranges[axis].0;
        }
    }
}
