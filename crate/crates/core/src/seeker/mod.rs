//! D-UCB and position selection.

mod assignment;
mod confidence;

use nalgebra::DVector;
use thiserror::Error;

use crate::filter::FilterState;

pub use assignment::{assign_agents, hungarian};
pub use confidence::{ConfidenceConstants, ConfidenceMode, ConfidenceSchedule};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeekerError {
    #[error("cannot place {agents} agents on {cells} cells")]
    TooManyAgents { agents: usize, cells: usize },
    #[error("covariance diagonal entry {index} is negative ({value:e})")]
    NegativeVariance { index: usize, value: f64 },
    #[error("invalid confidence parameter: {0}")]
    InvalidParameter(String),
}

/// Tolerance below zero accepted on the covariance diagonal.
const NEGATIVE_DIAGONAL_TOLERANCE: f64 = 1e-12;

/// `mu = phi^ + beta sqrt(diag Sigma)` on the filter's stored covariance.
pub fn ducb(filter: &FilterState, beta: f64) -> Result<DVector<f64>, SeekerError> {
    let diag = filter.covariance_diagonal();
    let mut mu = filter.mean().clone();
    for (index, (m, &d)) in mu.iter_mut().zip(diag.iter()).enumerate() {
        if d < -NEGATIVE_DIAGONAL_TOLERANCE {
            return Err(SeekerError::NegativeVariance { index, value: d });
        }
        *m += beta * d.max(0.0).sqrt();
    }
    Ok(mu)
}

/// The `count` largest entries, ties to the lower index; returned in
/// ascending index order.
pub fn top_indices(values: &DVector<f64>, count: usize) -> Result<Vec<usize>, SeekerError> {
    let n = values.len();
    if count > n {
        return Err(SeekerError::TooManyAgents { agents: count, cells: n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut chosen = order[..count].to_vec();
    chosen.sort_unstable();
    Ok(chosen)
}

/// `sum_{s in union(cells)} values[s]`; repeated cells count once.
pub fn union_sum(values: &DVector<f64>, cells: &[usize]) -> f64 {
    let mut unique = cells.to_vec();
    unique.sort_unstable();
    unique.dedup();
    unique.iter().map(|&c| values[c]).sum()
}

/// Chosen cells for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub mu: DVector<f64>,
    pub beta: f64,
    /// Chosen cells, ascending.
    pub positions: Vec<usize>,
}

impl Decision {
    /// 0/1 action vector with one entry per chosen cell.
    pub fn action(&self) -> DVector<f64> {
        let mut a = DVector::zeros(self.mu.len());
        for &p in &self.positions {
            a[p] = 1.0;
        }
        a
    }
}

/// Top-`agents` cells of `mu`.
pub fn select_positions(mu: DVector<f64>, beta: f64, agents: usize) -> Result<Decision, SeekerError> {
    let positions = top_indices(&mu, agents)?;
    Ok(Decision { mu, beta, positions })
}
