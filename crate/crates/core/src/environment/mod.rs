//! Ground-truth grid world: nominal dynamics, disturbances and the state pair
//! `(phi_k, phi~_k)`.

mod disturbance;
mod dynamics;
mod grid;

use nalgebra::DVector;
use thiserror::Error;

pub use disturbance::{
    BudgetModel, DisturbanceKind, DisturbanceProfile, DisturbanceSchedule, InjectionWindow,
};
pub use dynamics::{
    build_convection_diffusion, convection_diffusion_stencil, state_propagation_matrix,
    verify_assumption1, AlphaBounds, Assumption1Report, ConvectionDiffusion, DynamicsModel,
    PropagationCache, Transition, TransitionSchedule,
};
pub use grid::GridSpec;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvironmentError {
    #[error("explicit scheme unstable: dt*(4D/h^2 + |v|/h) = {courant} >= 1")]
    UnstableScheme { courant: f64 },
    #[error("transition matrix singular (smallest singular value {smallest:e})")]
    Singular { smallest: f64 },
    #[error("invalid dynamics parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid alpha bounds ({lower}, {upper})")]
    InvalidBounds { lower: f64, upper: f64 },
    #[error("no transition matrix for step {step}")]
    StepOutOfRange { step: usize },
    #[error("state dimension {actual} does not match model dimension {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("state bound violated at step {step}: ||phi~|| = {norm} > {bound}")]
    StateBoundViolated { step: usize, norm: f64, bound: f64 },
}

/// Nominal and disturbed state at step `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentState {
    nominal: DVector<f64>,
    disturbed: DVector<f64>,
    step: usize,
    realized_budget: f64,
}

impl EnvironmentState {
    /// Undisturbed start: `phi~_0 = phi_0`.
    pub fn new(initial: DVector<f64>) -> Self {
        if initial.iter().any(|v| *v < 0.0) {
            log::warn!("initial field has negative entries");
        }
        Self {
            disturbed: initial.clone(),
            nominal: initial,
            step: 0,
            realized_budget: 0.0,
        }
    }

    pub fn nominal(&self) -> &DVector<f64> {
        &self.nominal
    }

    pub fn disturbed(&self) -> &DVector<f64> {
        &self.disturbed
    }

    pub fn step(&self) -> usize {
        self.step
    }

    /// `sum_{t < k} ||delta_t||`, the disturbance applied so far.
    pub fn realized_budget(&self) -> f64 {
        self.realized_budget
    }

    /// State the regret is measured against for the given disturbance type.
    pub fn objective_state(&self, kind: DisturbanceKind) -> &DVector<f64> {
        match kind {
            DisturbanceKind::TypeI => &self.nominal,
            DisturbanceKind::TypeII => &self.disturbed,
        }
    }
}

/// Advances `k -> k + 1` using `A_{k+1}` and `delta_k`.
pub fn propagate(
    state: &EnvironmentState,
    model: &DynamicsModel,
    schedule: &DisturbanceSchedule,
) -> Result<EnvironmentState, EnvironmentError> {
    let n = model.dim();
    if state.nominal.len() != n {
        return Err(EnvironmentError::DimensionMismatch {
            expected: n,
            actual: state.nominal.len(),
        });
    }
    let k = state.step;
    let a = model.transition(k + 1)?;
    let nominal = a.apply(&state.nominal);
    let delta = schedule.delta(k);
    let mut disturbed = match schedule.kind() {
        DisturbanceKind::TypeI => nominal.clone(),
        DisturbanceKind::TypeII => a.apply(&state.disturbed),
    };
    let mut realized_budget = state.realized_budget;
    if let Some(d) = &delta {
        disturbed += d;
        realized_budget += d.norm();
    }
    if let (DisturbanceKind::TypeII, Some(bound)) = (schedule.kind(), schedule.state_bound()) {
        let norm = disturbed.norm();
        if norm > bound {
            return Err(EnvironmentError::StateBoundViolated {
                step: k + 1,
                norm,
                bound,
            });
        }
    }
    if disturbed.iter().any(|v| *v < 0.0) {
        log::warn!("disturbed state has negative entries at step {}", k + 1);
    }
    Ok(EnvironmentState {
        nominal,
        disturbed,
        step: k + 1,
        realized_budget,
    })
}
