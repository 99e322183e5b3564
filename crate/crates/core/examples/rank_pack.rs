//! Prints the per-scenario ranking of a pack.
//!
//! `cargo run --release --example rank_pack [pack_dir] [dt]`
//!
//! Without a directory (or with `-`) the embedded pack is used. Set
//! `RANK_VERBOSE=1` for per-device breakdowns of every point, or `RANK_CSV=1`
//! to print only the results table.

use crowdsense::analysis::{ranked, rows_csv, run_point, scenario_trace, sweep, SweepInputs, SweepSettings};
use crowdsense::pack::{Pack, ROOT_SEED};
use std::time::Instant;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let pack = match args.first() {
        Some(dir) if dir != "-" => Pack::from_dir(std::path::Path::new(dir))?,
        _ => Pack::load()?,
    };
    let dt = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(0.5);
    let settings = SweepSettings {
        dt,
        root_seed: ROOT_SEED,
        ..SweepSettings::default()
    };
    let inputs = SweepInputs {
        plan: &pack.plan,
        models: &pack.models,
        configurations: &pack.configurations,
        scenarios: &pack.scenarios,
        goals: &pack.goals,
        energy: &pack.energy,
    };
    let started = Instant::now();
    let outcome = sweep(&inputs, &settings);
    for f in &outcome.failures {
        eprintln!("failed: {f}");
    }
    if std::env::var_os("RANK_CSV").is_some() {
        print!("{}", rows_csv(&outcome.rows));
        return Ok(());
    }
    println!("{} rows in {:.1?}", outcome.rows.len(), started.elapsed());
    let verbose = std::env::var_os("RANK_VERBOSE").is_some();

    for s in &pack.scenarios {
        let trace = scenario_trace(&pack.plan, s, &settings)?;
        println!(
            "\n{}: entered {} exited {} remaining {} crossings {}",
            s.name,
            trace.entered,
            trace.exited,
            trace.remaining,
            trace.crossings.len()
        );
        for (z, series) in trace.zone_ids.iter().zip(&trace.occupancy) {
            let peak = series.iter().max().copied().unwrap_or(0);
            let mean = series.iter().map(|&n| n as f64).sum::<f64>() / series.len().max(1) as f64;
            print!("  {z}:{mean:.0}/{peak}");
        }
        println!();
        println!(
            "  {:<14}{:<5}{:>9}{:>7}{:>8}{:>7}{:>7}{:>7}",
            "model", "cfg", "energy", "min", "mean", "q_s", "q_e", "t_s"
        );
        for r in ranked(&outcome.rows, &s.name) {
            println!(
                "  {:<14}{:<5}{:>9.2}{:>7}{:>8.1}{:>7.3}{:>7.3}{:>7.4}",
                r.model, r.configuration, r.total_energy, r.min_window_captures, r.mean_window_captures, r.q_s, r.q_e, r.t_s
            );
            if verbose {
                let m = pack.model(&r.model).expect("row model");
                let c = pack.configuration(&r.configuration).expect("row configuration");
                let (result, _) = run_point(&pack.plan, &trace, m, c, &s.name, &pack.goals[&s.name], &pack.energy, ROOT_SEED)?;
                println!("     windows {:?}", result.captures_per_window);
                for d in &result.devices {
                    println!(
                        "     {:<16}{:>9.3} J {:>8} captures {:>7.0} s critical",
                        d.device_id, d.energy, d.captures, d.critical_seconds
                    );
                }
            }
        }
    }
    Ok(())
}
