//! Analysis configuration: the JSON schema as read from disk and its
//! resolution into library objects. Everything structural is checked here,
//! before any abstraction is built.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use nalgebra::DMatrix;
use serde::Deserialize;
use symqsr::abstraction::{validate_for, AbstractionParams, RadiusMode};
use symqsr::builtins::{builtin, BuiltinName};
use symqsr::composition::OutputMode;
use symqsr::dissipativity::{FormulaMode, PassivityIndices, QsrTriple, TransferConstants};
use symqsr::relations::RelationKind;
use symqsr::systems::{l2_gain_u_to_ydot, BoxSet, ContinuousSystem, GainEstimate, MeasurementMode};

/// A number or one of a few keywords, e.g. `0.5` or `"auto"`.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum NumberOr {
    Number(f64),
    Word(String),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum MatrixOr {
    Matrix(Vec<Vec<f64>>),
    Word(String),
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxBlock {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LtiBlock {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub d: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemBlock {
    pub builtin: Option<BuiltinName>,
    pub lti: Option<LtiBlock>,
    pub measurement_mode: Option<MeasurementMode>,
    pub domain: Option<BoxBlock>,
    pub input_set: Option<BoxBlock>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsBlock {
    pub tau: Option<f64>,
    pub eta: Option<f64>,
    pub mu: Option<f64>,
    pub theta1: Option<f64>,
    pub theta2: Option<f64>,
    pub eps_u: Option<f64>,
    pub eps_y: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupplyBlock {
    pub passivity: Option<PassivityIndices>,
    pub q: Option<Vec<Vec<f64>>>,
    pub s: Option<Vec<Vec<f64>>>,
    pub r: Option<Vec<Vec<f64>>>,
}

/// One plant with everything needed to abstract and certify it.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantBlock {
    pub system: SystemBlock,
    #[serde(default)]
    pub params: ParamsBlock,
    pub gamma: Option<NumberOr>,
    /// Supply rate of the continuous plant.
    pub supply: Option<SupplyBlock>,
    /// Supply rate asserted directly for the abstraction.
    pub abstraction_supply: Option<SupplyBlock>,
    pub storage: Option<MatrixOr>,
    pub lipschitz: Option<NumberOr>,
    pub beta: Option<NumberOr>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferBlock {
    pub zeta1: f64,
    pub zeta2: f64,
    pub zeta3: f64,
    pub zeta4: f64,
    /// Supply rate to check for the continuous plant.
    pub candidate: Option<SupplyBlock>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompositionBlock {
    pub second: PlantBlock,
    pub eps_u: Option<f64>,
    pub eps_y: Option<f64>,
    pub output_mode: Option<OutputMode>,
    /// Supply rate to check for the composed system.
    pub candidate: Option<SupplyBlock>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSimBlock {
    pub first: PathBuf,
    pub second: PathBuf,
    pub eps_u: f64,
    pub eps_y: f64,
    pub kind: Option<RelationKind>,
}

/// Top level: the plant fields of [`PlantBlock`] plus the optional
/// analysis blocks.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub system: Option<SystemBlock>,
    #[serde(default)]
    pub params: ParamsBlock,
    pub gamma: Option<NumberOr>,
    pub supply: Option<SupplyBlock>,
    pub abstraction_supply: Option<SupplyBlock>,
    pub storage: Option<MatrixOr>,
    pub lipschitz: Option<NumberOr>,
    pub beta: Option<NumberOr>,
    pub transfer: Option<TransferBlock>,
    pub composition: Option<CompositionBlock>,
    pub check_sim: Option<CheckSimBlock>,
    pub formula_mode: Option<FormulaMode>,
    pub radius_mode: Option<RadiusMode>,
}

impl AnalysisConfig {
    fn plant_block(&self) -> Option<PlantBlock> {
        Some(PlantBlock {
            system: self.system.clone()?,
            params: self.params.clone(),
            gamma: self.gamma.clone(),
            supply: self.supply.clone(),
            abstraction_supply: self.abstraction_supply.clone(),
            storage: self.storage.clone(),
            lipschitz: self.lipschitz.clone(),
            beta: self.beta.clone(),
        })
    }
}

/// Parses a configuration, reporting schema violations with the path of
/// the offending field.
pub fn parse(text: &str) -> Result<AnalysisConfig> {
    let mut de = serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        anyhow!("config schema violation at {}: {}", if path == "." { "top level".into() } else { path }, e.inner())
    })
}

pub fn load(path: &Path) -> Result<AnalysisConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    parse(&text)
}

#[derive(Clone, Debug)]
pub enum StorageChoice {
    Matrix(DMatrix<f64>),
    Search,
    Missing,
}

#[derive(Clone, Copy, Debug)]
pub enum LipschitzChoice {
    Auto,
    Value(f64),
}

#[derive(Clone, Copy, Debug)]
pub enum BetaChoice {
    Auto,
    HalfCell,
    Radius,
    Value(f64),
}

#[derive(Clone, Debug)]
pub struct Gamma {
    pub value: f64,
    pub source: &'static str,
    pub estimate: Option<GainEstimate>,
}

#[derive(Clone, Debug)]
pub struct Plant {
    pub label: String,
    pub system: ContinuousSystem,
    pub params: AbstractionParams,
    pub gamma: Gamma,
    pub supply: Option<QsrTriple>,
    pub abstraction_supply: Option<QsrTriple>,
    pub storage: StorageChoice,
    pub lipschitz: LipschitzChoice,
    pub beta: BetaChoice,
}

#[derive(Clone, Debug)]
pub struct Transfer {
    pub zeta: TransferConstants,
    pub candidate: Option<QsrTriple>,
}

#[derive(Clone, Debug)]
pub struct CompositionSetup {
    pub second: Plant,
    pub eps_u: f64,
    pub eps_y: f64,
    pub output_mode: OutputMode,
    pub candidate: Option<QsrTriple>,
}

#[derive(Clone, Debug)]
pub struct CheckSim {
    pub first: PathBuf,
    pub second: PathBuf,
    pub eps_u: f64,
    pub eps_y: f64,
    pub kind: RelationKind,
}

#[derive(Clone, Debug)]
pub struct Analysis {
    /// `None` when the config has no `system` block (enough for `check-sim`).
    pub plant: Option<Plant>,
    pub transfer: Option<Transfer>,
    pub composition: Option<CompositionSetup>,
    pub check_sim: Option<CheckSim>,
    pub formula_mode: FormulaMode,
    pub radius_mode: RadiusMode,
}

impl Analysis {
    pub fn plant(&self) -> Result<&Plant> {
        self.plant.as_ref().ok_or_else(|| anyhow!("system: this command needs a `system` block"))
    }
}

/// Mode overrides from the command line.
#[derive(Clone, Copy, Debug, Default)]
pub struct Overrides {
    pub formula_mode: Option<FormulaMode>,
    pub radius_mode: Option<RadiusMode>,
}

fn matrix(rows: &[Vec<f64>], field: &str) -> Result<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some((k, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
        bail!("{field}: row {k} has {} entries, expected {ncols}", row.len());
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        bail!("{field}: entries must be finite");
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn box_set(b: &BoxBlock, field: &str) -> Result<BoxSet> {
    BoxSet::new(b.lower.clone(), b.upper.clone()).map_err(|e| anyhow!("{field}: {e}"))
}

fn supply(block: &SupplyBlock, outputs: usize, inputs: usize, field: &str) -> Result<QsrTriple> {
    let triple = match (block.passivity, &block.q, &block.s, &block.r) {
        (Some(idx), None, None, None) => {
            if outputs != inputs {
                bail!("{field}.passivity: needs as many outputs as inputs, system has {outputs} and {inputs}");
            }
            return Ok(idx.to_qsr(inputs));
        }
        (None, Some(q), Some(s), Some(r)) => QsrTriple::new(
            matrix(q, &format!("{field}.q"))?,
            matrix(s, &format!("{field}.s"))?,
            matrix(r, &format!("{field}.r"))?,
        )
        .map_err(|e| anyhow!("{field}: {e}"))?,
        _ => bail!("{field}: give either `passivity` or all of `q`, `s`, `r`"),
    };
    if triple.output_dim() != outputs || triple.input_dim() != inputs {
        bail!(
            "{field}: supply rate is for {} outputs and {} inputs, system has {outputs} and {inputs}",
            triple.output_dim(),
            triple.input_dim()
        );
    }
    Ok(triple)
}

fn number_or(v: &NumberOr, words: &[&str], field: &str) -> Result<Result<f64, String>> {
    match v {
        NumberOr::Number(x) if x.is_finite() => Ok(Ok(*x)),
        NumberOr::Number(x) => bail!("{field}: {x} is not finite"),
        NumberOr::Word(w) if words.contains(&w.as_str()) => Ok(Err(w.clone())),
        NumberOr::Word(w) => bail!("{field}: expected a number or one of {words:?}, got \"{w}\""),
    }
}

fn resolve_plant(block: &PlantBlock, radius_mode: RadiusMode, prefix: &str) -> Result<Plant> {
    let sys_field = format!("{prefix}system");
    let s = &block.system;
    let base = match (s.builtin, &s.lti) {
        (Some(name), None) => Some(builtin(name, radius_mode)),
        (None, Some(_)) => None,
        (Some(_), Some(_)) => bail!("{sys_field}: give either `builtin` or `lti`, not both"),
        (None, None) => bail!("{sys_field}: missing `builtin` or `lti`"),
    };

    let system = match (&base, &s.lti) {
        (Some(b), _) => {
            let (a, bm, c, d) = b.system.lti_matrices().expect("builtins are linear");
            let domain = match &s.domain {
                Some(d) => box_set(d, &format!("{sys_field}.domain"))?,
                None => b.system.domain().clone(),
            };
            let input_set = match &s.input_set {
                Some(u) => box_set(u, &format!("{sys_field}.input_set"))?,
                None => b.system.input_set().clone(),
            };
            let measurement = s.measurement_mode.unwrap_or(b.system.measurement());
            ContinuousSystem::lti(a.clone(), bm.clone(), c.clone(), d.clone(), measurement, domain, input_set)
                .map_err(|e| anyhow!("{sys_field}: {e}"))?
        }
        (None, Some(lti)) => {
            let measurement =
                s.measurement_mode.ok_or_else(|| anyhow!("{sys_field}.measurement_mode: required for an `lti` system"))?;
            let domain = s.domain.as_ref().ok_or_else(|| anyhow!("{sys_field}.domain: required for an `lti` system"))?;
            let input_set = s.input_set.as_ref().ok_or_else(|| anyhow!("{sys_field}.input_set: required for an `lti` system"))?;
            let f = |name: &str| format!("{sys_field}.lti.{name}");
            ContinuousSystem::lti(
                matrix(&lti.a, &f("a"))?,
                matrix(&lti.b, &f("b"))?,
                matrix(&lti.c, &f("c"))?,
                matrix(&lti.d, &f("d"))?,
                measurement,
                box_set(domain, &format!("{sys_field}.domain"))?,
                box_set(input_set, &format!("{sys_field}.input_set"))?,
            )
            .map_err(|e| anyhow!("{sys_field}.lti: {e}"))?
        }
        (None, None) => unreachable!(),
    };

    let pf = format!("{prefix}params");
    let defaults = base.as_ref().map(|b| b.params);
    let pick = |v: Option<f64>, d: Option<f64>, name: &str| -> Result<f64> {
        let x = v.or(d).ok_or_else(|| anyhow!("{pf}.{name}: required"))?;
        if !(x > 0.0 && x.is_finite()) {
            bail!("{pf}.{name}: must be finite and > 0, got {x}");
        }
        Ok(x)
    };
    let p = &block.params;
    let params = AbstractionParams {
        tau: pick(p.tau, defaults.map(|d| d.tau), "tau")?,
        eta: pick(p.eta, defaults.map(|d| d.eta), "eta")?,
        mu: pick(p.mu, defaults.map(|d| d.mu), "mu")?,
        theta1: pick(p.theta1, defaults.map(|d| d.theta1), "theta1")?,
        theta2: pick(p.theta2, defaults.map(|d| d.theta2), "theta2")?,
        eps_u: pick(p.eps_u, defaults.map(|d| d.eps_u), "eps_u")?,
        eps_y: pick(p.eps_y, defaults.map(|d| d.eps_y), "eps_y")?,
        radius_mode,
    };
    let violations = validate_for(&system, &params);
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(ToString::to_string).collect();
        bail!("{pf}: precision inequalities fail: {}", list.join("; "));
    }

    let (a, b, c, d) = system.lti_matrices().expect("configured systems are linear");
    let estimate = l2_gain_u_to_ydot(a, b, c, d).ok();
    let gamma = match block.gamma.as_ref().map(|g| number_or(g, &["estimate"], &format!("{prefix}gamma"))).transpose()? {
        Some(Ok(v)) if v >= 0.0 => Gamma { value: v, source: "config", estimate },
        Some(Ok(v)) => bail!("{prefix}gamma: must be ≥ 0, got {v}"),
        Some(Err(_)) => {
            let e = estimate.ok_or_else(|| anyhow!("{prefix}gamma: cannot estimate, A is not Hurwitz"))?;
            Gamma { value: e.gamma, source: "estimate", estimate }
        }
        None => match &base {
            Some(b) => Gamma { value: b.gamma, source: "builtin", estimate },
            None => {
                let e = estimate.ok_or_else(|| anyhow!("{prefix}gamma: required, A is not Hurwitz so it cannot be estimated"))?;
                Gamma { value: e.gamma, source: "estimate", estimate }
            }
        },
    };

    let (outputs, inputs) = (system.output_dim(), system.input_dim());
    let supply_triple = match &block.supply {
        Some(sb) => Some(supply(sb, outputs, inputs, &format!("{prefix}supply"))?),
        None => base.as_ref().and_then(|b| b.continuous_indices).map(|i| i.to_qsr(inputs)),
    };
    let abstraction_supply = match &block.abstraction_supply {
        Some(sb) => Some(supply(sb, outputs, inputs, &format!("{prefix}abstraction_supply"))?),
        None => base.as_ref().and_then(|b| b.abstraction_indices).map(|i| i.to_qsr(inputs)),
    };

    let n = system.state_dim();
    let storage = match &block.storage {
        Some(MatrixOr::Matrix(rows)) => {
            let p = matrix(rows, &format!("{prefix}storage"))?;
            if p.nrows() != n || p.ncols() != n {
                bail!("{prefix}storage: must be {n}x{n}, got {}x{}", p.nrows(), p.ncols());
            }
            StorageChoice::Matrix(p)
        }
        Some(MatrixOr::Word(w)) if w == "search" => StorageChoice::Search,
        Some(MatrixOr::Word(w)) => bail!("{prefix}storage: expected a matrix or \"search\", got \"{w}\""),
        None => match base.as_ref().and_then(|b| b.storage.clone()) {
            Some(p) => StorageChoice::Matrix(p),
            None => StorageChoice::Missing,
        },
    };
    let lipschitz = match block.lipschitz.as_ref().map(|l| number_or(l, &["auto"], &format!("{prefix}lipschitz"))).transpose()? {
        Some(Ok(v)) if v >= 0.0 => LipschitzChoice::Value(v),
        Some(Ok(v)) => bail!("{prefix}lipschitz: must be ≥ 0, got {v}"),
        _ => LipschitzChoice::Auto,
    };
    let beta = match block
        .beta
        .as_ref()
        .map(|b| number_or(b, &["auto", "half_cell", "radius"], &format!("{prefix}beta")))
        .transpose()?
    {
        Some(Ok(v)) => BetaChoice::Value(v),
        Some(Err(w)) if w == "half_cell" => BetaChoice::HalfCell,
        Some(Err(w)) if w == "radius" => BetaChoice::Radius,
        _ => BetaChoice::Auto,
    };

    let label = match s.builtin {
        Some(name) => name.tag().to_string(),
        None => "lti".to_string(),
    };
    Ok(Plant { label, system, params, gamma, supply: supply_triple, abstraction_supply, storage, lipschitz, beta })
}

/// Resolves every block. Relative paths are taken from `base_dir`.
pub fn resolve(cfg: &AnalysisConfig, overrides: Overrides, base_dir: &Path) -> Result<Analysis> {
    let formula_mode = overrides.formula_mode.or(cfg.formula_mode).unwrap_or(FormulaMode::Theorem);
    // the first-order plant is drawn with the figure radius by default
    let default_radius = match cfg.system.as_ref().and_then(|s| s.builtin) {
        Some(BuiltinName::Example1) => RadiusMode::Figure,
        _ => RadiusMode::Spec,
    };
    let radius_mode = overrides.radius_mode.or(cfg.radius_mode).unwrap_or(default_radius);
    let plant = cfg.plant_block().map(|b| resolve_plant(&b, radius_mode, "")).transpose()?;
    let dims = plant.as_ref().map(|p| (p.system.output_dim(), p.system.input_dim()));
    let needs_plant = |block: &str| anyhow!("{block}: needs a `system` block");

    let transfer = match &cfg.transfer {
        Some(t) => {
            let zeta = TransferConstants::new(t.zeta1, t.zeta2, t.zeta3, t.zeta4).map_err(|e| anyhow!("transfer: {e}"))?;
            let (outputs, inputs) = dims.ok_or_else(|| needs_plant("transfer"))?;
            let candidate = t.candidate.as_ref().map(|c| supply(c, outputs, inputs, "transfer.candidate")).transpose()?;
            Some(Transfer { zeta, candidate })
        }
        None => None,
    };

    let composition = match &cfg.composition {
        Some(c) => {
            let first = plant.as_ref().ok_or_else(|| needs_plant("composition"))?;
            let second = resolve_plant(&c.second, radius_mode, "composition.second.")?;
            if second.params.tau != first.params.tau {
                bail!("composition.second.params.tau: sampling periods differ ({} vs {})", second.params.tau, first.params.tau);
            }
            let eps_u = c.eps_u.unwrap_or(first.params.eps_u);
            let eps_y = c.eps_y.unwrap_or(first.params.eps_y);
            for (name, v) in [("eps_u", eps_u), ("eps_y", eps_y)] {
                if !(v >= 0.0 && v.is_finite()) {
                    bail!("composition.{name}: must be finite and ≥ 0, got {v}");
                }
            }
            let candidate = c
                .candidate
                .as_ref()
                .map(|s| supply(s, first.system.output_dim(), first.system.input_dim(), "composition.candidate"))
                .transpose()?;
            Some(CompositionSetup { second, eps_u, eps_y, output_mode: c.output_mode.unwrap_or(OutputMode::Average), candidate })
        }
        None => None,
    };

    let check_sim = match &cfg.check_sim {
        Some(c) => {
            for (name, v) in [("eps_u", c.eps_u), ("eps_y", c.eps_y)] {
                if !(v >= 0.0 && v.is_finite()) {
                    bail!("check_sim.{name}: must be finite and ≥ 0, got {v}");
                }
            }
            Some(CheckSim {
                first: base_dir.join(&c.first),
                second: base_dir.join(&c.second),
                eps_u: c.eps_u,
                eps_y: c.eps_y,
                kind: c.kind.unwrap_or(RelationKind::Ios),
            })
        }
        None => None,
    };

    Ok(Analysis { plant, transfer, composition, check_sim, formula_mode, radius_mode })
}
