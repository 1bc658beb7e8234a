//! The pipeline steps behind each command. Steps append sections to the
//! report and write side files; the caller turns the verdict into an exit
//! code.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::ValueEnum;
use nalgebra::DMatrix;
use symqsr::abstraction::{build_abstraction, Abstraction, RadiusMode};
use symqsr::composition::{build_feedback_relation, check_prop_5_2, compose, composition_qsr, Composition};
use symqsr::dissipativity::{
    abstraction_qsr_output_measured, abstraction_qsr_state_measured, default_beta, feedback_passivity_index, kron_batch_check,
    lipschitz_bound, search_storage, search_transfer_shift, transfer_offset_constant, transfer_passivity_indices,
    transfer_qsr_from_abstraction, verify_lti_qsr, verify_quasi_dissipativity, BetaPolicy, QsrTriple, StorageFunction,
    StorageSearch,
};
use symqsr::error::Error;
use symqsr::relations::{check_covering, max_ioas_relation, max_ios_relation, RelationKind};
use symqsr::systems::{lti_ifc_bounds, MeasurementMode};
use symqsr::transition::FiniteTransitionSystem;

use crate::config::{Analysis, BetaChoice, LipschitzChoice, Plant, StorageChoice};
use crate::report::Report;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Build the abstraction and export DOT and JSON.
    Abstract,
    /// Maximal relation between two serialized transition systems.
    CheckSim,
    /// Supply rate certified for the abstraction.
    DeriveQsr,
    /// Per-transition storage check on the abstraction.
    Verify,
    /// Supply rate transferred back to the continuous plant.
    Transfer,
    /// Feedback composition with a second plant.
    Compose,
    /// Every applicable step.
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Abstract => "abstract",
            Command::CheckSim => "check-sim",
            Command::DeriveQsr => "derive-qsr",
            Command::Verify => "verify",
            Command::Transfer => "transfer",
            Command::Compose => "compose",
            Command::Report => "report",
        }
    }
}

struct Outputs {
    dir: PathBuf,
}

impl Outputs {
    fn write(&self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
    }
}

pub fn run(command: Command, analysis: &Analysis, out_dir: &Path) -> Result<Report> {
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let out = Outputs { dir: out_dir.to_path_buf() };
    let mut report = Report::new(command.name(), analysis.formula_mode, analysis.radius_mode);
    match command {
        Command::Abstract => {
            let plant = analysis.plant()?;
            let abs = abstract_plant(plant)?;
            describe_abstraction(&mut report, "abstraction", plant, &abs);
            export_abstraction(&mut report, &out, &abs)?;
        }
        Command::CheckSim => check_sim(&mut report, analysis)?,
        Command::DeriveQsr => {
            let plant = analysis.plant()?;
            describe_gamma(&mut report, plant);
            derive(&mut report, analysis, plant, "abstraction_supply")?;
        }
        Command::Verify => {
            let plant = analysis.plant()?;
            let abs = abstract_plant(plant)?;
            describe_abstraction(&mut report, "abstraction", plant, &abs);
            let qsr = derive(&mut report, analysis, plant, "abstraction_supply")?;
            verify(&mut report, &out, analysis, plant, &abs, &qsr)?;
        }
        Command::Transfer => {
            let plant = analysis.plant()?;
            let qsr = derive(&mut report, analysis, plant, "abstraction_supply")?;
            transfer(&mut report, analysis, plant, &qsr)?;
        }
        Command::Compose => compose_step(&mut report, analysis)?,
        Command::Report => {
            let plant = analysis.plant()?;
            let abs = abstract_plant(plant)?;
            describe_abstraction(&mut report, "abstraction", plant, &abs);
            export_abstraction(&mut report, &out, &abs)?;
            describe_gamma(&mut report, plant);
            let qsr = derive(&mut report, analysis, plant, "abstraction_supply")?;
            if matches!(plant.storage, StorageChoice::Missing) {
                report.note("certificate skipped: no storage matrix configured");
            } else {
                verify(&mut report, &out, analysis, plant, &abs, &qsr)?;
            }
            if analysis.transfer.is_some() {
                transfer(&mut report, analysis, plant, &qsr)?;
            }
            if analysis.composition.is_some() {
                compose_step(&mut report, analysis)?;
            }
        }
    }
    Ok(report)
}

fn abstract_plant(plant: &Plant) -> Result<Abstraction> {
    let (a, b, _, _) = plant.system.lti_matrices().expect("configured systems are linear");
    let ifc = lti_ifc_bounds(a, b)?;
    build_abstraction(&plant.system, &ifc, &plant.params).with_context(|| format!("abstracting {}", plant.label))
}

/// Larger graphs are not drawable; their DOT file is skipped.
const DOT_TRANSITION_LIMIT: usize = 1_000_000;

fn export_abstraction(report: &mut Report, out: &Outputs, abs: &Abstraction) -> Result<()> {
    if abs.ts.num_transitions() <= DOT_TRANSITION_LIMIT {
        out.write("abstraction.dot", &abs.ts.export_dot())?;
    } else {
        report.note(format!("abstraction.dot skipped: {} transitions exceed {DOT_TRANSITION_LIMIT}", abs.ts.num_transitions()));
    }
    let mut json = abs.ts.to_json()?;
    json.push('\n');
    out.write("abstraction.json", &json)
}

fn describe_abstraction(report: &mut Report, name: &str, plant: &Plant, abs: &Abstraction) {
    let p = plant.params;
    let mut s = report.section(name);
    s.text("system", plant.label.clone())
        .text(
            "measurement",
            match plant.system.measurement() {
                MeasurementMode::StateMeasured => "state_measured",
                MeasurementMode::OutputMeasured => "output_measured",
            },
        )
        .number("tau", p.tau)
        .number("eta", p.eta)
        .number("mu", p.mu)
        .number("theta1", p.theta1)
        .number("theta2", p.theta2)
        .number("eps_u", p.eps_u)
        .number("eps_y", p.eps_y)
        .number("successor_radius", abs.radius)
        .count("states", abs.ts.num_states())
        .count("inputs", abs.ts.num_inputs())
        .count("transitions", abs.ts.num_transitions())
        .flag("deterministic", abs.ts.is_deterministic())
        .count("states_without_successors", abs.warnings.len());
}

fn describe_gamma(report: &mut Report, plant: &Plant) {
    let g = &plant.gamma;
    let mut s = report.section("gamma");
    s.number("value", g.value).text("source", g.source);
    if let Some(e) = g.estimate {
        s.number("estimate", e.gamma).number("high_frequency_limit", e.high_frequency_limit);
        match e.peak_frequency {
            Some(w) => s.number("peak_frequency", w),
            None => s.text("peak_frequency", "infinity"),
        };
    }
}

/// Supply rate for the abstraction: given directly, or derived from the
/// plant's by the closed form matching its measurement mode.
fn derive(report: &mut Report, analysis: &Analysis, plant: &Plant, section: &str) -> Result<QsrTriple> {
    let p = plant.params;
    let (qsr, source) = match (&plant.abstraction_supply, &plant.supply) {
        (Some(given), _) => (given.clone(), "given".to_string()),
        (None, Some(continuous)) => match plant.system.measurement() {
            MeasurementMode::StateMeasured => {
                (abstraction_qsr_state_measured(continuous, p.tau, plant.gamma.value)?, "state_measured formula".to_string())
            }
            MeasurementMode::OutputMeasured => (
                abstraction_qsr_output_measured(
                    continuous,
                    p.tau,
                    plant.gamma.value,
                    p.mu,
                    plant.system.input_dim(),
                    analysis.formula_mode,
                )?,
                format!("output_measured formula ({})", analysis.formula_mode),
            ),
        },
        (None, None) => bail!("supply: {} has no supply rate; add `supply` or `abstraction_supply`", plant.label),
    };
    let mut s = report.section(section);
    s.text("system", plant.label.clone()).text("source", source);
    if let Some(c) = &plant.supply {
        s.qsr("continuous_", c);
    }
    s.qsr("", &qsr);
    Ok(qsr)
}

fn storage_matrix(report: &mut Report, plant: &Plant) -> Result<Option<DMatrix<f64>>> {
    match &plant.storage {
        StorageChoice::Matrix(p) => Ok(Some(p.clone())),
        StorageChoice::Search => {
            let (a, b, c, d) = plant.system.lti_matrices().expect("configured systems are linear");
            let supply = plant.supply.as_ref().ok_or_else(|| anyhow!("storage: \"search\" needs the continuous `supply`"))?;
            let found = search_storage(a, b, c, d, supply, &StorageSearch::default())?;
            if found.is_none() {
                report.note("storage search found no matrix with a nonnegative margin");
            }
            Ok(found)
        }
        StorageChoice::Missing => bail!("storage: {} has no storage matrix; give one or \"search\"", plant.label),
    }
}

fn verify(
    report: &mut Report,
    out: &Outputs,
    analysis: &Analysis,
    plant: &Plant,
    abs: &Abstraction,
    qsr: &QsrTriple,
) -> Result<()> {
    let Some(p) = storage_matrix(report, plant)? else {
        report.section("certificate").flag("verdict", false);
        report.add_verdict(false);
        return Ok(());
    };
    let params = plant.params;
    let lipschitz = match plant.lipschitz {
        LipschitzChoice::Value(v) => v,
        LipschitzChoice::Auto => lipschitz_bound(&p, abs.ts.states(), Some(plant.system.domain())),
    };
    let policy = match (plant.beta, analysis.radius_mode) {
        (BetaChoice::HalfCell, _) | (BetaChoice::Auto, RadiusMode::Figure) => Some(BetaPolicy::HalfCell),
        (BetaChoice::Radius, _) | (BetaChoice::Auto, RadiusMode::Spec) => Some(BetaPolicy::Radius),
        (BetaChoice::Value(_), _) => None,
    };
    let beta = match (plant.beta, policy) {
        (BetaChoice::Value(v), _) => v,
        (_, Some(policy)) => default_beta(policy, lipschitz, params.eta, abs.radius, params.tau),
        (_, None) => unreachable!(),
    };
    let storage = StorageFunction::sampled(p.clone(), params.tau, lipschitz)?;
    let cert = verify_quasi_dissipativity(&abs.ts, qsr, &storage, beta)?
        .with_modes(Some(analysis.formula_mode), Some(analysis.radius_mode));

    let (a, b, c, d) = plant.system.lti_matrices().expect("configured systems are linear");
    let continuous = plant.supply.as_ref().map(|s| verify_lti_qsr(a, b, c, d, &p, s)).transpose()?;
    // the block form rebuilds outputs from C and D, which matches the
    // abstraction only when outputs are not quantized
    let block_match = match (qsr.as_passivity(), plant.system.measurement()) {
        (Some(idx), MeasurementMode::StateMeasured) if c.nrows() == d.ncols() => {
            let mut blocks = kron_batch_check(&abs.ts, idx, c, d, &storage, beta)?;
            let mut direct: Vec<f64> = cert.margins.iter().map(|m| m.margin).collect();
            blocks.sort_by(f64::total_cmp);
            direct.sort_by(f64::total_cmp);
            Some(blocks.len() == direct.len() && blocks.iter().zip(&direct).all(|(x, y)| (x - y).abs() <= 1e-12))
        }
        _ => None,
    };
    let _ = b;

    let mut s = report.section("certificate");
    s.matrix("storage", &p)
        .number("storage_scale", storage.scale())
        .number("lipschitz", lipschitz)
        .text(
            "beta_policy",
            match (plant.beta, policy) {
                (BetaChoice::Value(_), _) => "given",
                (_, Some(BetaPolicy::HalfCell)) => "half_cell",
                _ => "radius",
            },
        )
        .number("beta", beta)
        .count("checked", cert.checked);
    match cert.min_margin {
        Some(m) => s.number("min_margin", m),
        None => s.text("min_margin", "none"),
    };
    if let Some(check) = continuous {
        s.number("continuous_margin", check.margin).flag("continuous_ok", check.ok);
    }
    if let Some(m) = block_match {
        s.flag("block_form_matches", m);
    }
    s.flag("verdict", cert.verdict);
    report.add_verdict(cert.verdict);
    let mut json = cert.to_json()?;
    json.push('\n');
    out.write("certificate.json", &json)
}

fn transfer(report: &mut Report, analysis: &Analysis, plant: &Plant, known: &QsrTriple) -> Result<()> {
    let t = analysis.transfer.as_ref().ok_or_else(|| anyhow!("transfer: this command needs a `transfer` block"))?;
    let z = t.zeta;
    let mut ok = true;
    let mut notes = Vec::new();
    let mut derived: Option<QsrTriple> = None;
    let mut lines: Vec<(String, f64)> = Vec::new();
    match known.as_passivity() {
        Some(idx) => match transfer_passivity_indices(idx.rho, idx.nu, &z) {
            Ok(found) => {
                lines.push(("rho".into(), found.rho));
                lines.push(("nu".into(), found.nu));
                derived = Some(found.to_qsr(plant.system.input_dim()));
            }
            Err(Error::Precondition(why)) => {
                ok = false;
                notes.push(format!("transfer precondition: {why}"));
            }
            Err(e) => return Err(e.into()),
        },
        None => match search_transfer_shift(known, &z)? {
            Some(shift) => {
                lines.push(("q_shift".into(), shift.q_shift));
                lines.push(("r_shift".into(), shift.r_shift));
                derived = Some(shift.candidate);
            }
            None => {
                ok = false;
                notes.push("no shift of Q and R satisfies the transfer inequalities".into());
            }
        },
    }
    let checked = match (&t.candidate, &derived) {
        (Some(c), _) => Some(("candidate", c.clone())),
        (None, Some(d)) => Some(("derived", d.clone())),
        (None, None) => None,
    };
    let slacks = checked.as_ref().map(|(_, c)| transfer_qsr_from_abstraction(known, &z, c)).transpose()?;

    let mut s = report.section("transfer");
    s.number("zeta1", z.zeta1).number("zeta2", z.zeta2).number("zeta3", z.zeta3).number("zeta4", z.zeta4);
    for (name, v) in &lines {
        s.number(name, *v);
    }
    if let (Some((which, c)), Some(check)) = (&checked, &slacks) {
        s.text("checked", *which)
            .number("slack_q", check.slacks[0])
            .number("slack_r", check.slacks[1])
            .number("s_gap", check.slacks[2])
            .flag("inequalities_hold", check.ok)
            .number("offset_constant", transfer_offset_constant(c, &z, plant.params.eps_u, plant.params.eps_y));
        ok &= check.ok;
    }
    s.flag("verdict", ok);
    for n in notes {
        report.note(n);
    }
    report.add_verdict(ok);
    Ok(())
}

fn compose_step(report: &mut Report, analysis: &Analysis) -> Result<()> {
    let setup = analysis.composition.as_ref().ok_or_else(|| anyhow!("composition: this command needs a `composition` block"))?;
    let first = analysis.plant()?;
    let second = &setup.second;
    let abs1 = abstract_plant(first)?;
    let abs2 = abstract_plant(second)?;
    describe_abstraction(report, "first", first, &abs1);
    describe_abstraction(report, "second", second, &abs2);
    let (t1, t2) = (&abs1.ts, &abs2.ts);
    let (eps_u, eps_y) = (setup.eps_u, setup.eps_y);

    let rel = max_ioas_relation(t2, t1, eps_u, eps_y)?;
    let f = build_feedback_relation(t1, t2, &rel, eps_u, eps_y)?;
    let composition = compose(t1, t2, &f, setup.output_mode, eps_u, eps_y)?;
    let mut ok = true;
    {
        let mut s = report.section("composition");
        s.text("output_mode", setup.output_mode.tag())
            .number("eps_u", eps_u)
            .number("eps_y", eps_y)
            .count("relation_pairs", rel.len())
            .count("feedback_quadruples", f.len());
        match &composition {
            Composition::Composed(c) => {
                let holds = check_prop_5_2(c, t1, t2)?;
                s.flag("composable", true)
                    .count("states", c.ts.num_states())
                    .count("inputs", c.ts.num_inputs())
                    .count("transitions", c.ts.num_transitions())
                    .flag("simulated_by_components", holds);
                ok &= holds;
            }
            Composition::NotComposable => {
                s.flag("composable", false);
                ok = false;
            }
        }
    }

    let mut sub = Report::new("", analysis.formula_mode, analysis.radius_mode);
    let qsr1 = derive(&mut sub, analysis, first, "first_supply")?;
    let qsr2 = derive(&mut sub, analysis, second, "second_supply")?;
    report.sections.extend(sub.sections);
    if let (Some(p1), Some(p2)) = (qsr1.as_passivity(), qsr2.as_passivity()) {
        let loop_index = feedback_passivity_index(p1.rho, p1.nu, p2.rho, p2.nu);
        report.section("loop").flag("passive", loop_index.ok).number("output_passivity_index", loop_index.rho_cl);
        ok &= loop_index.ok;
    }
    if let (Some(t), Some(candidate)) = (&analysis.transfer, &setup.candidate) {
        let check = composition_qsr(&qsr1, &t.zeta, candidate)?;
        let mut s = report.section("composed_supply");
        s.qsr("", candidate)
            .number("slack_q", check.slacks[0])
            .number("slack_r", check.slacks[1])
            .number("s_gap", check.slacks[2])
            .flag("inequalities_hold", check.ok);
        ok &= check.ok;
    } else if setup.candidate.is_some() {
        report.note("composition.candidate is checked only with a `transfer` block for the constants");
    }
    report.add_verdict(ok);
    Ok(())
}

fn check_sim(report: &mut Report, analysis: &Analysis) -> Result<()> {
    let c = analysis.check_sim.as_ref().ok_or_else(|| anyhow!("check_sim: this command needs a `check_sim` block"))?;
    let load = |path: &Path| -> Result<FiniteTransitionSystem> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        FiniteTransitionSystem::from_json(&text).with_context(|| format!("loading {}", path.display()))
    };
    let t1 = load(&c.first)?;
    let t2 = load(&c.second)?;
    let rel = match c.kind {
        RelationKind::Ios => max_ios_relation(&t1, &t2, c.eps_u, c.eps_y)?,
        RelationKind::Ioas => max_ioas_relation(&t1, &t2, c.eps_u, c.eps_y)?,
    };
    let covered = check_covering(&rel, &t1);
    report
        .section("relation")
        .text(
            "kind",
            match c.kind {
                RelationKind::Ios => "ios",
                RelationKind::Ioas => "ioas",
            },
        )
        .number("eps_u", c.eps_u)
        .number("eps_y", c.eps_y)
        .count("first_states", t1.num_states())
        .count("second_states", t2.num_states())
        .count("pairs", rel.len())
        .put(
            "pair_list",
            crate::report::Value::Text(rel.pairs.iter().map(|(a, b)| format!("({a},{b})")).collect::<Vec<_>>().join(" ")),
        )
        .flag("every_first_state_related", covered);
    report.add_verdict(covered);
    Ok(())
}
