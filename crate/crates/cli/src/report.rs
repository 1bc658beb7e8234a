//! Human-readable and JSON reports. Every item carries the formula and
//! radius modes it was computed under.

use serde::Serialize;
use symqsr::abstraction::RadiusMode;
use symqsr::dissipativity::{FormulaMode, QsrTriple};
use symqsr::transition::format_number;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Value {
    Number(f64),
    Count(usize),
    Matrix(Vec<Vec<f64>>),
    Flag(bool),
    Text(String),
}

impl Value {
    fn render(&self) -> String {
        let vector = |v: &[f64]| format!("[{}]", v.iter().map(|x| number(*x)).collect::<Vec<_>>().join(", "));
        match self {
            Value::Number(x) => number(*x),
            Value::Count(n) => n.to_string(),
            Value::Matrix(rows) => format!("[{}]", rows.iter().map(|r| vector(r)).collect::<Vec<_>>().join(", ")),
            Value::Flag(b) => b.to_string(),
            Value::Text(s) => s.clone(),
        }
    }
}

fn number(x: f64) -> String {
    if x.is_finite() {
        format_number(x)
    } else {
        x.to_string()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Item {
    pub name: String,
    pub value: Value,
    pub formula_mode: FormulaMode,
    pub radius_mode: RadiusMode,
}

#[derive(Clone, Debug, Serialize)]
pub struct Section {
    pub name: String,
    pub items: Vec<Item>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    fn tag(self) -> &'static str {
        match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub command: String,
    pub formula_mode: FormulaMode,
    pub radius_mode: RadiusMode,
    pub sections: Vec<Section>,
    /// `None` for commands that only compute (`abstract`, `derive-qsr`).
    pub verdict: Option<Verdict>,
    pub notes: Vec<String>,
}

impl Report {
    pub fn new(command: &str, formula_mode: FormulaMode, radius_mode: RadiusMode) -> Self {
        Self { command: command.to_string(), formula_mode, radius_mode, sections: Vec::new(), verdict: None, notes: Vec::new() }
    }

    pub fn section(&mut self, name: &str) -> SectionBuilder<'_> {
        self.sections.push(Section { name: name.to_string(), items: Vec::new() });
        let (formula_mode, radius_mode) = (self.formula_mode, self.radius_mode);
        SectionBuilder { section: self.sections.last_mut().expect("just pushed"), formula_mode, radius_mode }
    }

    /// Combines with an existing verdict; any failure is final.
    pub fn add_verdict(&mut self, ok: bool) {
        let v = Verdict::from_bool(ok);
        self.verdict = Some(match self.verdict {
            Some(Verdict::Fail) => Verdict::Fail,
            _ => v,
        });
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    pub fn to_text(&self) -> String {
        let tag = format!("[formula={} radius={}]", self.formula_mode, self.radius_mode);
        let mut out = String::new();
        out.push_str(&format!("command: {}\n", self.command));
        out.push_str(&format!("formula_mode: {}\n", self.formula_mode));
        out.push_str(&format!("radius_mode: {}\n", self.radius_mode));
        for section in &self.sections {
            out.push_str(&format!("\n[{}]\n", section.name));
            let width = section.items.iter().map(|i| i.name.chars().count()).max().unwrap_or(0);
            for item in &section.items {
                let pad = width - item.name.chars().count();
                out.push_str(&format!("  {}{} = {}  {tag}\n", item.name, " ".repeat(pad), item.value.render()));
            }
        }
        if !self.notes.is_empty() {
            out.push_str("\n[notes]\n");
            for n in &self.notes {
                out.push_str(&format!("  {n}\n"));
            }
        }
        if let Some(v) = self.verdict {
            out.push_str(&format!("\nverdict: {}\n", v.tag()));
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report values serialize");
        text.push('\n');
        text
    }
}

pub struct SectionBuilder<'a> {
    section: &'a mut Section,
    formula_mode: FormulaMode,
    radius_mode: RadiusMode,
}

impl SectionBuilder<'_> {
    pub fn put(&mut self, name: &str, value: Value) -> &mut Self {
        self.section.items.push(Item {
            name: name.to_string(),
            value,
            formula_mode: self.formula_mode,
            radius_mode: self.radius_mode,
        });
        self
    }

    pub fn number(&mut self, name: &str, x: f64) -> &mut Self {
        self.put(name, Value::Number(x))
    }

    pub fn count(&mut self, name: &str, n: usize) -> &mut Self {
        self.put(name, Value::Count(n))
    }

    pub fn flag(&mut self, name: &str, b: bool) -> &mut Self {
        self.put(name, Value::Flag(b))
    }

    pub fn text(&mut self, name: &str, s: impl Into<String>) -> &mut Self {
        self.put(name, Value::Text(s.into()))
    }

    pub fn matrix(&mut self, name: &str, m: &nalgebra::DMatrix<f64>) -> &mut Self {
        let rows = (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
        self.put(name, Value::Matrix(rows))
    }

    /// Passivity pair as `rho`/`nu` when the triple has that form, the full
    /// matrices otherwise.
    pub fn qsr(&mut self, prefix: &str, t: &QsrTriple) -> &mut Self {
        match t.as_passivity() {
            Some(idx) => self.number(&format!("{prefix}rho"), idx.rho).number(&format!("{prefix}nu"), idx.nu),
            None => self
                .matrix(&format!("{prefix}q"), t.q())
                .matrix(&format!("{prefix}s"), t.s())
                .matrix(&format!("{prefix}r"), t.r()),
        }
    }
}
