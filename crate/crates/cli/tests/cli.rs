//! End-to-end runs of the `symqsr` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(config: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_symqsr"))
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, json).unwrap();
    path
}

fn report(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

fn item<'a>(report: &'a Value, section: &str, name: &str) -> &'a Value {
    report["sections"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|s| s["name"] == section)
        .flat_map(|s| s["items"].as_array().unwrap())
        .find(|i| i["name"] == name)
        .map(|i| &i["value"])
        .unwrap_or_else(|| panic!("no {section}.{name}"))
}

fn number(report: &Value, section: &str, name: &str) -> f64 {
    item(report, section, name).as_f64().unwrap()
}

#[test]
fn first_order_report_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&configs().join("example1.json"), dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(dir.path());
    assert_eq!(r["verdict"], "PASS");
    assert!((number(&r, "abstraction_supply", "rho") - 0.19).abs() < 1e-12);
    assert!((number(&r, "abstraction_supply", "nu") - 0.338).abs() < 1e-12);
    assert_eq!(number(&r, "abstraction", "states"), 5.0);
    assert_eq!(number(&r, "abstraction", "transitions"), 27.0);
    assert!((number(&r, "certificate", "min_margin") - 0.002098).abs() < 1e-6);
    for file in ["report.txt", "report.json", "abstraction.dot", "abstraction.json", "certificate.json"] {
        assert!(dir.path().join(file).exists(), "{file}");
    }
    let text = fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert!(text.ends_with("verdict: PASS\n"));
    let printed = |name: &str| {
        text.lines()
            .find(|l| l.trim_start().starts_with(&format!("{name} ")) && l.contains("="))
            .map(|l| l.split('=').nth(1).unwrap().split_whitespace().next().unwrap().to_string())
    };
    assert_eq!(printed("rho").as_deref(), Some("0.19"));
    assert_eq!(printed("nu").as_deref(), Some("0.338"));
    assert_eq!(printed("states").as_deref(), Some("5"));
    assert_eq!(printed("transitions").as_deref(), Some("27"));
    assert_eq!(String::from_utf8(out.stdout).unwrap(), text);
}

#[test]
fn coarse_grid_gives_a_single_node() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"system":{"builtin":"example1"},"params":{"eta":1}}"#);
    let out = run(&cfg, &dir.path().join("out"), &["--command", "abstract"]);
    assert_eq!(out.status.code(), Some(0));
    let dot = fs::read_to_string(dir.path().join("out/abstraction.dot")).unwrap();
    let nodes: Vec<&str> = dot.lines().filter(|l| l.contains("[label=") && !l.contains("->")).collect();
    assert_eq!(nodes.len(), 1, "{dot}");
    assert_eq!(report(&dir.path().join("out"))["verdict"], Value::Null);
}

#[test]
fn compatibility_mode_reproduces_the_plant_indices() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"system":{"builtin":"example2_plant"}}"#);
    let out = run(&cfg, dir.path(), &["--command", "derive-qsr", "--mode", "example2compat"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(dir.path());
    assert!((number(&r, "abstraction_supply", "rho") + 0.7653).abs() < 5e-5);
    assert!((number(&r, "abstraction_supply", "nu") - 0.1329).abs() < 5e-5);
    assert_eq!(r["formula_mode"], "example2compat");

    let out = run(&cfg, dir.path(), &["--command", "derive-qsr", "--mode", "theorem"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(dir.path());
    assert!((number(&r, "abstraction_supply", "rho") - 0.10359).abs() < 5e-5);
    assert!((number(&r, "abstraction_supply", "nu") - 0.38292).abs() < 5e-5);
}

#[test]
fn identical_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        assert_eq!(run(&configs().join("example1.json"), out, &[]).status.code(), Some(0));
    }
    for file in ["report.txt", "report.json", "abstraction.dot", "abstraction.json", "certificate.json"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
    }
}

#[test]
fn failed_certificate_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"system":{"builtin":"example1"},"abstraction_supply":{"passivity":{"rho":10,"nu":0.338}}}"#,
    );
    let out = run(&cfg, dir.path(), &["--command", "verify"]);
    assert_eq!(out.status.code(), Some(2));
    let r = report(dir.path());
    assert_eq!(r["verdict"], "FAIL");
    assert!(number(&r, "certificate", "min_margin") < 0.0);
    assert!(fs::read_to_string(dir.path().join("report.txt")).unwrap().ends_with("verdict: FAIL\n"));
}

#[test]
fn config_errors_exit_with_one_and_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (r#"{"system":{"builtin":"example1"},"params":{"etta":1}}"#, "params.etta"),
        (r#"{"system":{"builtin":"example1"},"params":{"tau":"fast"}}"#, "params.tau"),
        (r#"{"system":{"builtin":"example1"},"params":{"eta":3}}"#, "η/2 ≤ ε_y"),
        (r#"{"system":{"lti":{"a":[[-1]],"b":[[1]],"c":[[1]],"d":[[0]]}}}"#, "system.measurement_mode"),
        (r#"{"system":{"builtin":"example1"},"storage":[[1,0],[0,1]]}"#, "storage: must be 1x1"),
        (r#"{"system":{"builtin":"example1"},"transfer":{"zeta1":1,"zeta2":1,"zeta3":1}}"#, "transfer"),
    ];
    for (json, needle) in cases {
        let cfg = write_config(dir.path(), "c.json", json);
        let out = run(&cfg, &dir.path().join("out"), &[]);
        assert_eq!(out.status.code(), Some(1), "{json}");
        let err = String::from_utf8(out.stderr).unwrap();
        assert!(err.starts_with("error: "), "{err}");
        assert!(err.contains(needle), "{needle} not in {err}");
    }
}

#[test]
fn every_line_names_its_modes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&configs().join("example1.json"), dir.path(), &["--mode", "example2compat", "--radius", "spec"]);
    assert!(out.status.code() == Some(0) || out.status.code() == Some(2));
    let text = fs::read_to_string(dir.path().join("report.txt")).unwrap();
    let items: Vec<&str> = text.lines().filter(|l| l.contains(" = ")).collect();
    assert!(items.len() > 20);
    for line in items {
        assert!(line.ends_with("[formula=example2compat radius=spec]"), "{line}");
    }
    let r = report(dir.path());
    for section in r["sections"].as_array().unwrap() {
        for i in section["items"].as_array().unwrap() {
            assert_eq!(i["formula_mode"], "example2compat");
            assert_eq!(i["radius_mode"], "spec");
        }
    }
    // the wider successor radius needs the matching disturbance bound
    assert_eq!(item(&r, "certificate", "beta_policy"), "radius");
    assert_eq!(r["verdict"], "PASS");
}

#[test]
fn check_sim_compares_serialized_systems() {
    let dir = tempfile::tempdir().unwrap();
    let fine = dir.path().join("fine");
    let coarse = dir.path().join("coarse");
    assert_eq!(run(&configs().join("example1.json"), &fine, &["--command", "abstract"]).status.code(), Some(0));
    let cfg = write_config(dir.path(), "coarse.json", r#"{"system":{"builtin":"example1"},"params":{"eta":1}}"#);
    assert_eq!(run(&cfg, &coarse, &["--command", "abstract"]).status.code(), Some(0));

    let sim = |eps_y: f64| {
        format!(
            r#"{{"check_sim":{{"first":"fine/abstraction.json","second":"coarse/abstraction.json","eps_u":0,"eps_y":{eps_y}}}}}"#
        )
    };
    let cfg = write_config(dir.path(), "sim.json", &sim(0.2));
    let out = run(&cfg, &dir.path().join("o"), &["--command", "check-sim"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(number(&report(&dir.path().join("o")), "relation", "pairs"), 5.0);

    let cfg = write_config(dir.path(), "sim.json", &sim(0.15));
    let out = run(&cfg, &dir.path().join("o"), &["--command", "check-sim"]);
    assert_eq!(out.status.code(), Some(2));
    let r = report(&dir.path().join("o"));
    assert_eq!(item(&r, "relation", "every_first_state_related"), false);
}

#[test]
fn plant_and_controller_loop_is_passive() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&configs().join("example2_loop.json"), dir.path(), &["--command", "compose"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(dir.path());
    assert_eq!(item(&r, "composition", "composable"), true);
    assert_eq!(item(&r, "composition", "simulated_by_components"), true);
    assert_eq!(item(&r, "loop", "passive"), true);
    assert!((number(&r, "loop", "output_passivity_index") - 0.04622).abs() < 1e-5);
}
