//! Scenario configuration, the seeking loop, multi-trial runs and outputs.

mod builtin;
mod config;
mod output;
mod runner;

use std::path::PathBuf;

use thiserror::Error;

use crate::environment::EnvironmentError;
use crate::filter::FilterError;
use crate::seeker::SeekerError;
use crate::sensing::SensingError;

pub use builtin::{builtin, builtin_names, builtin_scenarios};
pub use config::{
    AgentsConfig, BudgetConfig, ConfidenceConfig, DisturbanceConfig, DynamicsConfig, FieldConfig,
    FilterConfig, FilterMode, GridConfig, PatternConfig, PatternEntry, ScenarioConfig,
    ScheduleConfig, SourceConfig,
};
pub use output::{
    trial_file_name, write_aggregate_csv, write_outputs, write_trial_csv, GIT_DESCRIBE, TRIAL_HEADER,
};
pub use runner::{
    aggregate, quantile, reacquisition_delays, run_experiment, run_trial, spread_positions,
    AggregateRow, ExperimentResult, Injection, OracleReport, Scenario, StepRecord, TrialResult,
    ORACLE_MAX_CELLS,
};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot parse configuration: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("cannot serialize configuration: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },
    #[error(transparent)]
    Environment(#[from] EnvironmentError),
    #[error(transparent)]
    Sensing(#[from] SensingError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Seeker(#[from] SeekerError),
    #[error("step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<ScenarioError>,
    },
    #[error("unknown scenario '{0}'")]
    UnknownScenario(String),
}

impl ScenarioError {
    pub fn at_step(self, step: usize) -> Self {
        ScenarioError::Step {
            step,
            source: Box::new(self),
        }
    }
}
