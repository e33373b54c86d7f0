use nalgebra::DVector;
use serde::{Deserialize, Serialize};

/// Where the disturbance enters the state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisturbanceKind {
    /// External: `phi~_{k+1} = A_{k+1} phi_k + delta_k`; the nominal state
    /// never absorbs `delta`.
    #[serde(rename = "type_i")]
    TypeI,
    /// Internal: `phi~_{k+1} = A_{k+1} phi~_k + delta_k`; disturbances
    /// accumulate.
    #[serde(rename = "type_ii")]
    TypeII,
}

/// Inclusive window `[start, end]` during which `pattern` is injected.
#[derive(Debug, Clone, PartialEq)]
pub struct InjectionWindow {
    pub start: usize,
    pub end: usize,
    pub pattern: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DisturbanceProfile {
    None,
    /// `delta_k = pattern / k^2` for `k >= start`, zero before.
    InverseSquare { start: usize, pattern: DVector<f64> },
    Windows(Vec<InjectionWindow>),
    /// `delta_k = steps[k]`, zero past the end.
    Explicit(Vec<DVector<f64>>),
}

/// The non-stochastic sequence `delta_k` together with its type tag.
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceSchedule {
    kind: DisturbanceKind,
    profile: DisturbanceProfile,
    dim: usize,
    /// Uniform bound on `||phi~_k||` (type II only).
    state_bound: Option<f64>,
}

impl DisturbanceSchedule {
    pub fn new(kind: DisturbanceKind, profile: DisturbanceProfile, dim: usize) -> Self {
        Self {
            kind,
            profile,
            dim,
            state_bound: None,
        }
    }

    pub fn none(kind: DisturbanceKind, dim: usize) -> Self {
        Self::new(kind, DisturbanceProfile::None, dim)
    }

    pub fn with_state_bound(mut self, bound: f64) -> Self {
        self.state_bound = Some(bound);
        self
    }

    pub fn kind(&self) -> DisturbanceKind {
        self.kind
    }

    pub fn profile(&self) -> &DisturbanceProfile {
        &self.profile
    }

    pub fn state_bound(&self) -> Option<f64> {
        self.state_bound
    }

    /// `delta_k`, or `None` when it is exactly zero.
    pub fn delta(&self, k: usize) -> Option<DVector<f64>> {
        match &self.profile {
            DisturbanceProfile::None => None,
            DisturbanceProfile::InverseSquare { start, pattern } => {
                (k >= *start && k > 0).then(|| pattern / (k as f64 * k as f64))
            }
            DisturbanceProfile::Windows(windows) => {
                let mut acc: Option<DVector<f64>> = None;
                for w in windows.iter().filter(|w| w.start <= k && k <= w.end) {
                    acc = Some(match acc {
                        Some(a) => a + &w.pattern,
                        None => w.pattern.clone(),
                    });
                }
                acc
            }
            DisturbanceProfile::Explicit(steps) => steps.get(k).cloned(),
        }
    }

    pub fn delta_or_zero(&self, k: usize) -> DVector<f64> {
        self.delta(k).unwrap_or_else(|| DVector::zeros(self.dim))
    }

    /// Realized budget `B_K = sum_{k <= K} ||delta_k||`.
    pub fn budget(&self, horizon: usize) -> f64 {
        (0..=horizon)
            .filter_map(|k| self.delta(k))
            .map(|d| d.norm())
            .sum()
    }

    /// First step of each injection window (empty for other profiles).
    pub fn injection_starts(&self) -> Vec<usize> {
        match &self.profile {
            DisturbanceProfile::Windows(ws) => ws.iter().map(|w| w.start).collect(),
            _ => Vec::new(),
        }
    }
}

/// Analytic budget envelope used by the confidence schedule.
///
/// The true disturbance is hidden from the seeker; what it knows is the
/// shape of the schedule and a bound `pattern_norm` on `||Pi||`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum BudgetModel {
    Zero,
    /// `pattern_norm * sum_{start <= t <= k} 1/t^2`.
    InverseSquare { start: usize, pattern_norm: f64 },
    /// `pattern_norm * #{window steps <= k}`.
    Windows { windows: Vec<(usize, usize)>, pattern_norm: f64 },
    /// Declared constant budget.
    Constant(f64),
}

impl BudgetModel {
    pub fn at(&self, k: usize) -> f64 {
        match self {
            BudgetModel::Zero => 0.0,
            BudgetModel::InverseSquare { start, pattern_norm } => {
                let first = (*start).max(1);
                if k < first {
                    return 0.0;
                }
                pattern_norm * (first..=k).map(|t| 1.0 / (t as f64 * t as f64)).sum::<f64>()
            }
            BudgetModel::Windows {
                windows,
                pattern_norm,
            } => {
                let steps: usize = windows
                    .iter()
                    .filter(|(s, _)| *s <= k)
                    .map(|(s, e)| (*e).min(k) - s + 1)
                    .sum();
                pattern_norm * steps as f64
            }
            BudgetModel::Constant(b) => *b,
        }
    }

    /// Limit of the envelope as `k -> infinity` (`None` if unbounded).
    pub fn total(&self) -> Option<f64> {
        match self {
            BudgetModel::Zero => Some(0.0),
            BudgetModel::InverseSquare { start, pattern_norm } => {
                // sum_{t >= s} 1/t^2 = pi^2/6 - sum_{t < s} 1/t^2
                let first = (*start).max(1);
                let head: f64 = (1..first).map(|t| 1.0 / (t as f64 * t as f64)).sum();
                Some(pattern_norm * (std::f64::consts::PI.powi(2) / 6.0 - head))
            }
            BudgetModel::Windows {
                windows,
                pattern_norm,
            } => Some(pattern_norm * windows.iter().map(|(s, e)| (e - s + 1) as f64).sum::<f64>()),
            BudgetModel::Constant(b) => Some(*b),
        }
    }
}
