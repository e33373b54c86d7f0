//! Per-step regret against the clairvoyant top-I placement.

use nalgebra::DVector;

use crate::environment::{DisturbanceKind, EnvironmentState};
use crate::seeker::{top_indices, union_sum, SeekerError};

/// Hindsight-optimal cells for a state vector.
pub fn oracle_positions(state: &DVector<f64>, agents: usize) -> Result<Vec<usize>, SeekerError> {
    top_indices(state, agents)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegretRecord {
    pub step: usize,
    pub oracle: Vec<usize>,
    pub chosen: Vec<usize>,
    pub instantaneous: f64,
    pub cumulative: f64,
}

/// Regret of `chosen` on `state`, given the cumulative value before this step.
pub fn regret_on(
    step: usize,
    state: &DVector<f64>,
    chosen: &[usize],
    agents: usize,
    previous_cumulative: f64,
) -> Result<RegretRecord, SeekerError> {
    let oracle = oracle_positions(state, agents)?;
    let r = union_sum(state, &oracle) - union_sum(state, chosen);
    // Round-off can leave -0.0 or -ulp when chosen == oracle as sets.
    let instantaneous = r.max(0.0);
    Ok(RegretRecord {
        step,
        oracle,
        chosen: chosen.to_vec(),
        instantaneous,
        cumulative: previous_cumulative + instantaneous,
    })
}

/// Regret at the environment's step, on the nominal state for Type I and
/// the disturbed state for Type II.
pub fn step_regret(
    env: &EnvironmentState,
    chosen: &[usize],
    agents: usize,
    kind: DisturbanceKind,
    previous_cumulative: f64,
) -> Result<RegretRecord, SeekerError> {
    regret_on(env.step(), env.objective_state(kind), chosen, agents, previous_cumulative)
}

/// Running per-trial accumulation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegretAccumulator {
    records: Vec<RegretRecord>,
}

impl RegretAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cumulative(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.cumulative)
    }

    pub fn record(
        &mut self,
        env: &EnvironmentState,
        chosen: &[usize],
        agents: usize,
        kind: DisturbanceKind,
    ) -> Result<&RegretRecord, SeekerError> {
        let rec = step_regret(env, chosen, agents, kind, self.cumulative())?;
        self.records.push(rec);
        Ok(self.records.last().expect("just pushed"))
    }

    pub fn records(&self) -> &[RegretRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<RegretRecord> {
        self.records
    }
}
