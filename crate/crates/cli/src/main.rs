//! `symqsr`: build quantized abstractions of linear plants and certify
//! their supply rates from a JSON configuration.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;
use symqsr::abstraction::RadiusMode;
use symqsr::dissipativity::FormulaMode;

use commands::Command;
use report::Verdict;

#[derive(Debug, Parser)]
#[command(name = "symqsr", version, about = "Quantized abstractions and quasi-dissipativity checks")]
struct Cli {
    /// Analysis configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum, default_value = "report")]
    command: Command,
    /// Directory for report.txt, report.json and the exported artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides `formula_mode` from the config.
    #[arg(long, value_parser = parse_formula)]
    mode: Option<FormulaMode>,
    /// Overrides `radius_mode` from the config.
    #[arg(long, value_parser = parse_radius)]
    radius: Option<RadiusMode>,
}

fn parse_formula(s: &str) -> Result<FormulaMode, String> {
    match s {
        "theorem" => Ok(FormulaMode::Theorem),
        "example2compat" => Ok(FormulaMode::Example2Compat),
        _ => Err(format!("expected `theorem` or `example2compat`, got `{s}`")),
    }
}

fn parse_radius(s: &str) -> Result<RadiusMode, String> {
    match s {
        "spec" => Ok(RadiusMode::Spec),
        "figure" => Ok(RadiusMode::Figure),
        _ => Err(format!("expected `spec` or `figure`, got `{s}`")),
    }
}

fn run(cli: &Cli) -> Result<Option<Verdict>> {
    let cfg = config::load(&cli.config)?;
    let base_dir = cli.config.parent().map(PathBuf::from).unwrap_or_default();
    let overrides = config::Overrides { formula_mode: cli.mode, radius_mode: cli.radius };
    let analysis = config::resolve(&cfg, overrides, &base_dir)?;
    let report = commands::run(cli.command, &analysis, &cli.out)?;
    let text = report.to_text();
    std::fs::write(cli.out.join("report.txt"), &text).context("writing report.txt")?;
    std::fs::write(cli.out.join("report.json"), report.to_json()).context("writing report.json")?;
    print!("{text}");
    Ok(report.verdict)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Some(Verdict::Fail)) => ExitCode::from(2),
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
