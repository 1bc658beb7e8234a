//! Finite metric transition systems over quantization grids.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack used when deciding which multiples of a step fall inside a bound.
const GRID_EDGE_SLACK: f64 = 1e-9;

/// Uniform grid `{k·step : k ∈ ℤⁿ} ∩ box`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub step: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl GridSpec {
    pub fn new(step: f64, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let spec = Self { step, lower, upper };
        spec.validate()?;
        Ok(spec)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::InvalidArgument(format!("grid step must be > 0, got {}", self.step)));
        }
        if self.lower.len() != self.upper.len() {
            return Err(Error::Dimension("grid bounds of different lengths".into()));
        }
        for axis in 0..self.dim() {
            let (lo, hi) = (self.lower[axis], self.upper[axis]);
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::NonFinite("grid bounds"));
            }
            if lo > hi {
                return Err(Error::InvalidArgument(format!("axis {axis}: lower bound {lo} exceeds upper bound {hi}")));
            }
            let (kmin, kmax) = self.axis_range(axis);
            if kmin > kmax {
                return Err(Error::EmptyGrid { axis, step: self.step, lower: lo, upper: hi });
            }
        }
        Ok(())
    }

    /// Integer range `[⌈lower/step⌉, ⌊upper/step⌋]` of an axis.
    pub fn axis_range(&self, axis: usize) -> (i64, i64) {
        let kmin = (self.lower[axis] / self.step - GRID_EDGE_SLACK).ceil() as i64;
        let kmax = (self.upper[axis] / self.step + GRID_EDGE_SLACK).floor() as i64;
        (kmin, kmax)
    }

    pub fn axis_len(&self, axis: usize) -> usize {
        let (kmin, kmax) = self.axis_range(axis);
        (kmax - kmin + 1).max(0) as usize
    }

    pub fn len(&self) -> usize {
        (0..self.dim()).map(|a| self.axis_len(a)).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Position of the grid point with integer coordinates `ks` in
    /// [`build_grid`] order, if it lies inside the box.
    pub fn index_of(&self, ks: &[i64]) -> Option<usize> {
        if ks.len() != self.dim() {
            return None;
        }
        let mut index = 0usize;
        for (axis, &k) in ks.iter().enumerate() {
            let (kmin, kmax) = self.axis_range(axis);
            if k < kmin || k > kmax {
                return None;
            }
            index = index * self.axis_len(axis) + (k - kmin) as usize;
        }
        Some(index)
    }

    /// Integer coordinates of the point at `index` in [`build_grid`] order.
    pub fn coords_of(&self, mut index: usize) -> Vec<i64> {
        let mut ks = vec![0i64; self.dim()];
        for axis in (0..self.dim()).rev() {
            let len = self.axis_len(axis);
            let (kmin, _) = self.axis_range(axis);
            ks[axis] = kmin + (index % len) as i64;
            index /= len;
        }
        ks
    }
}

/// All grid points, lexicographically sorted (first axis slowest).
pub fn build_grid(spec: &GridSpec) -> Result<Vec<Vec<f64>>> {
    spec.validate()?;
    Ok((0..spec.len()).map(|i| spec.coords_of(i).iter().map(|&k| k as f64 * spec.step).collect()).collect())
}

/// Nearest multiple of `step` per coordinate; half-step ties go to +∞.
pub fn quantize(x: &[f64], step: f64) -> Vec<f64> {
    x.iter().map(|&v| quantize_index(v, step) as f64 * step).collect()
}

pub(crate) fn quantize_index(v: f64, step: f64) -> i64 {
    (v / step + 0.5).floor() as i64
}

/// A finite, possibly nondeterministic transition system with per-cell
/// measured and system outputs. Distances are ∞-norms throughout.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteTransitionSystem {
    states: Vec<Vec<f64>>,
    inputs: Vec<Vec<f64>>,
    post: Vec<Vec<Vec<usize>>>,
    measured_output: Vec<Vec<Vec<f64>>>,
    system_output: Vec<Vec<Vec<f64>>>,
    tau: f64,
}

impl FiniteTransitionSystem {
    /// System without transitions; both outputs default to the state.
    pub fn new(states: Vec<Vec<f64>>, inputs: Vec<Vec<f64>>, tau: f64) -> Result<Self> {
        let cells = |s: &Vec<f64>| vec![s.clone(); inputs.len()];
        let measured: Vec<_> = states.iter().map(cells).collect();
        let post = vec![vec![Vec::new(); inputs.len()]; states.len()];
        Self::from_parts(states.clone(), inputs.clone(), post, measured.clone(), measured, tau)
    }

    /// Checked constructor; Post sets are sorted and deduplicated.
    pub fn from_parts(
        states: Vec<Vec<f64>>,
        inputs: Vec<Vec<f64>>,
        mut post: Vec<Vec<Vec<usize>>>,
        measured_output: Vec<Vec<Vec<f64>>>,
        system_output: Vec<Vec<Vec<f64>>>,
        tau: f64,
    ) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidArgument(format!("tau must be > 0, got {tau}")));
        }
        uniform_dim(&states, "state")?;
        uniform_dim(&inputs, "input")?;
        let (ns, ni) = (states.len(), inputs.len());
        for (name, table) in
            [("post", post.len()), ("measured_output", measured_output.len()), ("system_output", system_output.len())]
        {
            if table != ns {
                return Err(Error::Malformed(format!("{name} has {table} rows for {ns} states")));
            }
        }
        for s in 0..ns {
            if post[s].len() != ni || measured_output[s].len() != ni || system_output[s].len() != ni {
                return Err(Error::Malformed(format!("state {s}: expected {ni} input cells")));
            }
            for succ in post[s].iter_mut() {
                succ.sort_unstable();
                succ.dedup();
                if let Some(&bad) = succ.iter().find(|&&t| t >= ns) {
                    return Err(Error::Malformed(format!("state {s}: successor {bad} is not a state index (have {ns})")));
                }
            }
        }
        let flat = |t: &Vec<Vec<Vec<f64>>>| t.iter().flatten().cloned().collect::<Vec<_>>();
        uniform_dim(&flat(&measured_output), "measured output")?;
        uniform_dim(&flat(&system_output), "system output")?;
        Ok(Self { states, inputs, post, measured_output, system_output, tau })
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_inputs(&self) -> usize {
        self.inputs.len()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn state(&self, s: usize) -> &[f64] {
        &self.states[s]
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i]
    }

    /// `Post_u(x)` as a sorted index set.
    pub fn post(&self, s: usize, i: usize) -> Result<&[usize]> {
        self.check(s, i)?;
        Ok(&self.post[s][i])
    }

    /// Unchecked variant of [`Self::post`] for hot loops over valid indices.
    pub fn successors(&self, s: usize, i: usize) -> &[usize] {
        &self.post[s][i]
    }

    /// `U(x)`: inputs with a nonempty Post set, ascending.
    pub fn enabled_inputs(&self, s: usize) -> impl Iterator<Item = usize> + '_ {
        self.post[s].iter().enumerate().filter(|(_, p)| !p.is_empty()).map(|(i, _)| i)
    }

    pub fn measured_output(&self, s: usize, i: usize) -> &[f64] {
        &self.measured_output[s][i]
    }

    pub fn system_output(&self, s: usize, i: usize) -> &[f64] {
        &self.system_output[s][i]
    }

    /// `(state, input, successor)` triples in ascending order.
    pub fn transitions(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.post
            .iter()
            .enumerate()
            .flat_map(|(s, row)| row.iter().enumerate().flat_map(move |(i, succ)| succ.iter().map(move |&t| (s, i, t))))
    }

    pub fn num_transitions(&self) -> usize {
        self.post.iter().flatten().map(Vec::len).sum()
    }

    pub fn is_deterministic(&self) -> bool {
        self.post.iter().flatten().all(|p| p.len() <= 1)
    }

    pub fn add_transition(&mut self, s: usize, i: usize, t: usize) -> Result<()> {
        self.check(s, i)?;
        if t >= self.num_states() {
            return Err(Error::IndexOutOfRange(format!("successor {t} of {} states", self.num_states())));
        }
        let cell = &mut self.post[s][i];
        if let Err(pos) = cell.binary_search(&t) {
            cell.insert(pos, t);
        }
        Ok(())
    }

    pub fn set_outputs(&mut self, s: usize, i: usize, measured: Vec<f64>, system: Vec<f64>) -> Result<()> {
        self.check(s, i)?;
        if measured.len() != self.measured_output[s][i].len() || system.len() != self.system_output[s][i].len() {
            return Err(Error::Dimension("output length differs from the existing outputs".into()));
        }
        self.measured_output[s][i] = measured;
        self.system_output[s][i] = system;
        Ok(())
    }

    fn check(&self, s: usize, i: usize) -> Result<()> {
        if s >= self.num_states() || i >= self.num_inputs() {
            return Err(Error::IndexOutOfRange(format!(
                "(state {s}, input {i}) with {} states and {} inputs",
                self.num_states(),
                self.num_inputs()
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = TransitionSystemJson {
            tau: self.tau,
            deterministic: self.is_deterministic(),
            states: self.states.clone(),
            inputs: self.inputs.clone(),
            cells: (0..self.num_states())
                .flat_map(|s| (0..self.num_inputs()).map(move |i| (s, i)))
                .map(|(s, i)| CellJson {
                    state: s,
                    input: i,
                    successors: self.post[s][i].clone(),
                    measured_output: self.measured_output[s][i].clone(),
                    system_output: self.system_output[s][i].clone(),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: TransitionSystemJson = serde_json::from_str(text)?;
        let (ns, ni) = (doc.states.len(), doc.inputs.len());
        let mut post = vec![vec![None; ni]; ns];
        let mut measured = vec![vec![Vec::new(); ni]; ns];
        let mut system = vec![vec![Vec::new(); ni]; ns];
        for cell in doc.cells {
            if cell.state >= ns || cell.input >= ni {
                return Err(Error::Malformed(format!("cell (state {}, input {}) out of range", cell.state, cell.input)));
            }
            if post[cell.state][cell.input].is_some() {
                return Err(Error::Malformed(format!("duplicate cell (state {}, input {})", cell.state, cell.input)));
            }
            post[cell.state][cell.input] = Some(cell.successors);
            measured[cell.state][cell.input] = cell.measured_output;
            system[cell.state][cell.input] = cell.system_output;
        }
        let post = post
            .into_iter()
            .enumerate()
            .map(|(s, row)| {
                row.into_iter()
                    .enumerate()
                    .map(|(i, p)| p.ok_or_else(|| Error::Malformed(format!("missing cell (state {s}, input {i})"))))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let ts = Self::from_parts(doc.states, doc.inputs, post, measured, system, doc.tau)?;
        if ts.is_deterministic() != doc.deterministic {
            return Err(Error::Malformed(format!(
                "deterministic flag is {} but the Post sets say {}",
                doc.deterministic,
                ts.is_deterministic()
            )));
        }
        Ok(ts)
    }

    /// Graphviz rendering: nodes `s<k>` labeled with the state vector, one
    /// edge per (state, input, successor) labeled with the input vector.
    pub fn export_dot(&self) -> String {
        let mut out = String::from("digraph transition_system {\n    rankdir=LR;\n");
        for (s, x) in self.states.iter().enumerate() {
            let _ = writeln!(out, "    s{s} [label=\"{}\"];", format_vector(x));
        }
        for (s, i, t) in self.transitions() {
            let _ = writeln!(out, "    s{s} -> s{t} [label=\"{}\"];", format_vector(&self.inputs[i]));
        }
        out.push_str("}\n");
        out
    }
}

fn uniform_dim(rows: &[Vec<f64>], what: &str) -> Result<()> {
    if let Some(first) = rows.first() {
        if let Some(bad) = rows.iter().position(|r| r.len() != first.len()) {
            return Err(Error::Dimension(format!("{what} {bad} has {} entries, expected {}", rows[bad].len(), first.len())));
        }
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Malformed(format!("non-finite {what} entry")));
    }
    Ok(())
}

/// `(a, b, ...)` with at most 10 decimals and no trailing zeros.
pub fn format_vector(x: &[f64]) -> String {
    let parts: Vec<String> = x.iter().map(|&v| format_number(v)).collect();
    format!("({})", parts.join(", "))
}

pub fn format_number(v: f64) -> String {
    let s = format!("{v:.10}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransitionSystemJson {
    tau: f64,
    deterministic: bool,
    states: Vec<Vec<f64>>,
    inputs: Vec<Vec<f64>>,
    cells: Vec<CellJson>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CellJson {
    state: usize,
    input: usize,
    successors: Vec<usize>,
    measured_output: Vec<f64>,
    system_output: Vec<f64>,
}
