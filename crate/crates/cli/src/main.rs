//! `crowdsense`: validate inputs, simulate one design point, or sweep them all.

mod manifest;

use clap::{Args, Parser, Subcommand, ValueEnum};
use crowdsense::analysis::{report, results_json, results_meta, rows_csv, run_point, scenario_trace, sweep, SweepInputs, SweepSettings};
use manifest::{Diagnostic, Inputs, RunManifest};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_INVALID: u8 = 1;
const EXIT_PARTIAL: u8 = 2;

#[derive(Parser)]
#[command(name = "crowdsense", version, about = "Crowd-driven IoT architecture evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct Common {
    /// Run manifest (JSON).
    #[arg(long)]
    manifest: PathBuf,
    /// Root seed; overrides the manifest.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory; overrides the manifest.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Export format for traces and result rows.
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Load and check every input; print one JSON line per problem.
    Validate(Common),
    /// Run one model / configuration / scenario point and write its artifacts.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: String,
        #[arg(long = "config")]
        configuration: String,
        #[arg(long)]
        scenario: String,
    },
    /// Run every point and write the results table and ranked report.
    Sweep(Common),
}

struct Run {
    manifest: RunManifest,
    inputs: Inputs,
    settings: SweepSettings,
    out: PathBuf,
}

fn emit(diagnostics: &[Diagnostic]) {
    for d in diagnostics {
        println!("{}", d.json_line());
    }
}

fn prepare(common: &Common) -> Result<Run, Vec<Diagnostic>> {
    let manifest = RunManifest::load(&common.manifest).map_err(|d| vec![d])?;
    let inputs = manifest.inputs(&common.manifest);
    let settings = SweepSettings {
        dt: manifest.dt,
        horizon: manifest.horizon,
        root_seed: common.seed.unwrap_or(manifest.seed),
        jobs: common.jobs,
    };
    let out = common.out.clone().unwrap_or_else(|| manifest.out.clone());
    Ok(Run {
        manifest,
        inputs,
        settings,
        out,
    })
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), Diagnostic> {
    let path = dir.join(name);
    std::fs::create_dir_all(dir)
        .and_then(|_| std::fs::write(&path, contents))
        .map_err(|e| Diagnostic::error("io", path.display().to_string(), None, e.to_string()))
}

/// Prints a failure line and returns the validation exit status.
fn invalid(diagnostics: &[Diagnostic]) -> ExitCode {
    emit(diagnostics);
    ExitCode::from(EXIT_INVALID)
}

fn validate(common: &Common) -> ExitCode {
    let run = match prepare(common) {
        Ok(run) => run,
        Err(d) => return invalid(&d),
    };
    let d = &run.inputs.diagnostics;
    emit(d);
    eprintln!("{} diagnostic(s)", d.len());
    if d.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_INVALID)
    }
}

fn simulate(common: &Common, model: &str, configuration: &str, scenario: &str) -> ExitCode {
    let run = match prepare(common) {
        Ok(run) if !run.inputs.fatal => run,
        Ok(run) => return invalid(&run.inputs.diagnostics),
        Err(d) => return invalid(&d),
    };
    let i = &run.inputs;
    let (Some(plan), Some(energy)) = (&i.plan, &i.energy) else {
        return invalid(&i.diagnostics);
    };
    let manifest = run.manifest.models.display().to_string();
    let missing = |what: &str, name: &str, file: &Path| {
        Diagnostic::error("unknown_name", file.display().to_string(), None, format!("no {what} named `{name}`"))
    };
    let m = i.models.iter().find(|m| m.name == model).ok_or_else(|| missing("model", model, &run.manifest.models));
    let c = i
        .configurations
        .iter()
        .find(|c| c.name == configuration)
        .ok_or_else(|| missing("configuration", configuration, &run.manifest.configurations));
    let s = i.scenarios.iter().find(|s| s.name == scenario).ok_or_else(|| {
        Diagnostic::error("unknown_name", manifest.clone(), Some("scenarios".into()), format!("no scenario named `{scenario}`"))
    });
    let (m, c, s) = match (m, c, s) {
        (Ok(m), Ok(c), Ok(s)) => (m, c, s),
        (m, c, s) => return invalid(&[m.err(), c.err(), s.err()].into_iter().flatten().collect::<Vec<_>>()),
    };
    let goals = &i.goals[&s.name];

    let pipeline = |e: crowdsense::Error| Diagnostic::error("pipeline", format!("{model}/{configuration}/{scenario}"), None, e.to_string());
    let trace = match scenario_trace(plan, s, &run.settings) {
        Ok(t) => t,
        Err(e) => return invalid(&[pipeline(e)]),
    };
    let (result, row) = match run_point(plan, &trace, m, c, &s.name, goals, energy, run.settings.root_seed) {
        Ok(r) => r,
        Err(e) => return invalid(&[pipeline(e)]),
    };

    let (trace_file, row_file) = match common.format {
        Format::Csv => (("trace.csv", trace.crossings_csv()), ("row.csv", rows_csv(std::slice::from_ref(&row)))),
        Format::Json => (
            ("trace.json", serde_json::to_string_pretty(&trace).expect("trace serializes")),
            ("row.json", serde_json::to_string_pretty(&row).expect("row serializes")),
        ),
    };
    let files = [
        trace_file,
        ("occupancy.csv", trace.occupancy_csv()),
        ("iot_result.json", serde_json::to_string_pretty(&result).expect("result serializes")),
        row_file,
    ];
    for (name, contents) in &files {
        if let Err(d) = write(&run.out, name, contents) {
            return invalid(&[d]);
        }
    }
    println!("t_s {}", row.t_s);
    ExitCode::SUCCESS
}

fn run_sweep(common: &Common) -> ExitCode {
    let run = match prepare(common) {
        Ok(run) if !run.inputs.fatal => run,
        Ok(run) => return invalid(&run.inputs.diagnostics),
        Err(d) => return invalid(&d),
    };
    let i = &run.inputs;
    let (Some(plan), Some(energy)) = (&i.plan, &i.energy) else {
        return invalid(&i.diagnostics);
    };
    let inputs = SweepInputs {
        plan,
        models: &i.models,
        configurations: &i.configurations,
        scenarios: &i.scenarios,
        goals: &i.goals,
        energy,
    };
    let outcome = sweep(&inputs, &run.settings);
    let meta = results_meta(&inputs, &run.settings);
    let text = report(&meta, &outcome.rows);
    let failures: Vec<Diagnostic> = outcome
        .failures
        .iter()
        .map(|f| {
            Diagnostic::error(
                "point_failed",
                format!("{}/{}/{}", f.model, f.configuration, f.scenario),
                None,
                f.error.to_string(),
            )
        })
        .collect();
    let failure_lines: String = failures.iter().map(|d| d.json_line() + "\n").collect();
    let files = [
        ("results.csv", rows_csv(&outcome.rows)),
        ("results.json", results_json(&meta, &outcome.rows)),
        ("report.txt", text.clone()),
        ("failures.jsonl", failure_lines),
    ];
    for (name, contents) in &files {
        if let Err(d) = write(&run.out, name, contents) {
            return invalid(&[d]);
        }
    }
    print!("{text}");
    for d in &failures {
        eprintln!("{}", d.json_line());
    }
    eprintln!(
        "{} rows, {} failed points, written to {}",
        outcome.rows.len(),
        outcome.failures.len(),
        run.out.display()
    );
    if outcome.failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_PARTIAL)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Command::Validate(common) => validate(common),
        Command::Simulate {
            common,
            model,
            configuration,
            scenario,
        } => simulate(common, model, configuration, scenario),
        Command::Sweep(common) => run_sweep(common),
    }
}
