use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use source_seek::scenario::{
    builtin, builtin_names, run_experiment, write_outputs, Scenario, ScenarioConfig, ScenarioError,
};

#[derive(Parser)]
#[command(name = "source-seek", version, about = "Multi-agent source seeking under disturbances")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run all trials of a scenario and write CSV/JSON outputs.
    Run {
        /// Scenario TOML file, or the name of a builtin scenario.
        #[arg(long)]
        config: String,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: the config's output_dir, else out/<name>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Builtin scenarios.
    Scenarios {
        #[command(subcommand)]
        action: ScenariosAction,
    },
    /// Check the dynamics assumption only.
    Verify {
        #[arg(long)]
        config: String,
    },
    /// Cross-check the recursive filter against its closed form.
    Oracle {
        #[arg(long)]
        config: String,
        #[arg(long, default_value_t = 30)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum ScenariosAction {
    /// List builtin scenario names.
    List,
    /// Print a builtin scenario as TOML.
    Show { name: String },
}

fn load(config: &str) -> Result<ScenarioConfig, ScenarioError> {
    let path = PathBuf::from(config);
    if path.exists() {
        ScenarioConfig::from_file(&path)
    } else {
        builtin(config)
    }
}

fn run(cli: Cli) -> Result<(), ScenarioError> {
    match cli.command {
        Command::Run {
            config,
            trials,
            seed,
            out,
        } => {
            let mut cfg = load(&config)?;
            if let Some(t) = trials {
                cfg.trials = t;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.validate()?;
            let dir = out
                .or_else(|| cfg.output_dir.clone())
                .unwrap_or_else(|| PathBuf::from("out").join(&cfg.name));
            let result = run_experiment(&cfg)?;
            write_outputs(&result, &dir)?;
            let ok = result.successes();
            println!(
                "{}: {}/{} trials succeeded in {:.1}s, outputs in {}",
                cfg.name,
                ok.len(),
                cfg.trials,
                result.wall_clock.as_secs_f64(),
                dir.display()
            );
            if let Some(last) = result.aggregate.last() {
                println!(
                    "cumulative regret at K = {}: mean {:.3}, IQR [{:.3}, {:.3}]",
                    last.step + 1,
                    last.mean_rcum,
                    last.q25,
                    last.q75
                );
            }
            if ok.is_empty() {
                return Err(ScenarioError::Config("every trial failed".into()));
            }
        }
        Command::Scenarios { action } => match action {
            ScenariosAction::List => {
                for name in builtin_names() {
                    println!("{name}");
                }
            }
            ScenariosAction::Show { name } => print!("{}", builtin(&name)?.to_toml()?),
        },
        Command::Verify { config } => {
            let scenario = Scenario::build(load(&config)?)?;
            let report = scenario.assumption_report();
            let bounds = scenario.model().bounds();
            println!(
                "{}",
                serde_json::json!({
                    "cells": scenario.grid().cells(),
                    "time_invariant": scenario.model().is_time_invariant(),
                    "pairs_checked": report.pairs_checked,
                    "empirical_alpha": [report.empirical_lower, report.empirical_upper],
                    "declared_alpha": bounds.map(|b| [b.lower, b.upper]),
                    "within_declared": report.within_configured,
                })
            );
            if report.within_configured == Some(false) {
                return Err(ScenarioError::Config("declared alpha bounds violated".into()));
            }
        }
        Command::Oracle {
            config,
            steps,
            seed,
        } => {
            let scenario = Scenario::build(load(&config)?)?;
            let report = scenario.oracle_check(steps, seed)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("serializable report"));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
