use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::ScenarioConfig;
use super::runner::{AggregateRow, ExperimentResult, TrialResult};
use super::ScenarioError;

/// `git describe` of the build, or "unknown".
pub const GIT_DESCRIBE: &str = env!("SOURCE_SEEK_GIT_DESCRIBE");

pub const TRIAL_HEADER: [&str; 9] = [
    "step",
    "r",
    "R_cum",
    "chosen_cells",
    "oracle_cells",
    "beta",
    "lambda",
    "trace_sigma",
    "est_err_norm",
];

fn cells(c: &[usize]) -> String {
    c.iter().map(usize::to_string).collect::<Vec<_>>().join(";")
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> ScenarioError {
    ScenarioError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

pub fn trial_file_name(index: usize) -> String {
    format!("trial_{index:03}.csv")
}

pub fn write_trial_csv(path: &Path, trial: &TrialResult) -> Result<(), ScenarioError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(TRIAL_HEADER).map_err(|e| io_err(path, e))?;
    for r in &trial.records {
        w.write_record([
            r.step.to_string(),
            r.regret.to_string(),
            r.cumulative.to_string(),
            cells(&r.chosen),
            cells(&r.oracle),
            r.beta.to_string(),
            r.lambda.to_string(),
            r.trace_sigma.to_string(),
            r.est_err_norm.to_string(),
        ])
        .map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn write_aggregate_csv(path: &Path, rows: &[AggregateRow]) -> Result<(), ScenarioError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(["step", "mean_Rcum", "q25", "q75"]).map_err(|e| io_err(path, e))?;
    for r in rows {
        w.write_record([
            r.step.to_string(),
            r.mean_rcum.to_string(),
            r.q25.to_string(),
            r.q75.to_string(),
        ])
        .map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

#[derive(Debug, Serialize)]
struct TrialEntry {
    index: usize,
    seed: u64,
    file: Option<String>,
    error: Option<String>,
    wall_clock_seconds: Option<f64>,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    config: &'a ScenarioConfig,
    master_seed: u64,
    generator: &'static str,
    git_describe: &'static str,
    trials: Vec<TrialEntry>,
    wall_clock_seconds: f64,
}

/// Writes the per-trial CSVs, `aggregate.csv` and `manifest.json` into
/// `dir` (created if missing). Returns the files written.
pub fn write_outputs(result: &ExperimentResult, dir: &Path) -> Result<Vec<PathBuf>, ScenarioError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut written = Vec::new();
    let mut entries = Vec::new();
    for (i, (trial, seed)) in result.trials.iter().zip(&result.seeds).enumerate() {
        match trial {
            Ok(t) => {
                let name = trial_file_name(i);
                let path = dir.join(&name);
                write_trial_csv(&path, t)?;
                written.push(path);
                entries.push(TrialEntry {
                    index: i,
                    seed: *seed,
                    file: Some(name),
                    error: None,
                    wall_clock_seconds: Some(t.wall_clock.as_secs_f64()),
                });
            }
            Err(e) => entries.push(TrialEntry {
                index: i,
                seed: *seed,
                file: None,
                error: Some(e.to_string()),
                wall_clock_seconds: None,
            }),
        }
    }
    let agg = dir.join("aggregate.csv");
    write_aggregate_csv(&agg, &result.aggregate)?;
    written.push(agg);

    let manifest = Manifest {
        config: &result.config,
        master_seed: result.config.seed,
        generator: crate::rng::GENERATOR,
        git_describe: GIT_DESCRIBE,
        trials: entries,
        wall_clock_seconds: result.wall_clock.as_secs_f64(),
    };
    let path = dir.join("manifest.json");
    let mut f = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| io_err(&path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| io_err(&path, e))?;
    written.push(path);
    Ok(written)
}
