//! Selection-matrix sensors and the information pair `(y_k, Y_k)`.
//!
//! Each agent observes every cell within Euclidean radius `R` of its own
//! cell, with i.i.d. Gaussian noise of variance `v^i`. Because every row of
//! `H^i` is a unit coordinate vector, `Y_k = H^T V^{-1} H` is diagonal and is
//! accumulated directly from the coverage sets.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::environment::GridSpec;
use crate::rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SensingError {
    #[error("noise variance of agent {agent} is not positive ({value})")]
    NonPositiveVariance { agent: usize, value: f64 },
    #[error("noise variance {value} of agent {agent} outside bounds [{lower}, {upper}]")]
    VarianceOutOfBounds {
        agent: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("radius must be finite and non-negative, got {0}")]
    InvalidRadius(f64),
    #[error("expected {expected} positions, got {actual}")]
    AgentCountMismatch { expected: usize, actual: usize },
    #[error("position {position} outside the grid of {cells} cells")]
    PositionOutOfRange { position: usize, cells: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorModel {
    radius: f64,
    variances: Vec<f64>,
    lower: f64,
    upper: f64,
    /// Row/column offsets inside the sensing disc, in row-major order.
    offsets: Vec<(i64, i64)>,
}

impl SensorModel {
    /// Bounds default to the extreme configured variances.
    pub fn new(radius: f64, variances: Vec<f64>) -> Result<Self, SensingError> {
        let lower = variances.iter().copied().fold(f64::INFINITY, f64::min);
        let upper = variances.iter().copied().fold(0.0, f64::max);
        Self::with_bounds(radius, variances, lower, upper)
    }

    pub fn with_bounds(
        radius: f64,
        variances: Vec<f64>,
        lower: f64,
        upper: f64,
    ) -> Result<Self, SensingError> {
        if !(radius >= 0.0 && radius.is_finite()) {
            return Err(SensingError::InvalidRadius(radius));
        }
        for (agent, &value) in variances.iter().enumerate() {
            if !(value > 0.0 && value.is_finite()) {
                return Err(SensingError::NonPositiveVariance { agent, value });
            }
            if value < lower || value > upper {
                return Err(SensingError::VarianceOutOfBounds {
                    agent,
                    value,
                    lower,
                    upper,
                });
            }
        }
        let reach = radius.floor() as i64;
        let r2 = radius * radius;
        let mut offsets = Vec::new();
        for dr in -reach..=reach {
            for dc in -reach..=reach {
                if ((dr * dr + dc * dc) as f64) <= r2 {
                    offsets.push((dr, dc));
                }
            }
        }
        Ok(Self {
            radius,
            variances,
            lower,
            upper,
            offsets,
        })
    }

    pub fn agents(&self) -> usize {
        self.variances.len()
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    /// `(v_lower, v_upper)`.
    pub fn variance_bounds(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    fn coverage(&self, grid: &GridSpec, position: usize) -> Vec<usize> {
        let (r, c) = grid.coords(position);
        let side = grid.side() as i64;
        self.offsets
            .iter()
            .filter_map(|&(dr, dc)| {
                let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                (rr >= 0 && rr < side && cc >= 0 && cc < side)
                    .then(|| grid.index(rr as usize, cc as usize))
            })
            .collect()
    }
}

/// Cells whose centers lie within Euclidean distance `radius` of
/// `position`, ascending by index.
pub fn coverage_set(grid: &GridSpec, position: usize, radius: f64) -> Vec<usize> {
    let (r0, c0) = grid.coords(position);
    let r2 = radius * radius;
    (0..grid.cells())
        .filter(|&i| {
            let (r, c) = grid.coords(i);
            let dr = r as f64 - r0 as f64;
            let dc = c as f64 - c0 as f64;
            dr * dr + dc * dc <= r2
        })
        .collect()
}

/// One step of stacked measurements in information form.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementBatch {
    coverage: Vec<Vec<usize>>,
    observations: Vec<DVector<f64>>,
    variances: Vec<f64>,
    info_vector: DVector<f64>,
    info_diag: DVector<f64>,
    support: Vec<usize>,
}

impl MeasurementBatch {
    /// Builds the batch from per-agent coverage sets and raw observations.
    pub fn from_observations(
        dim: usize,
        coverage: Vec<Vec<usize>>,
        observations: Vec<DVector<f64>>,
        variances: Vec<f64>,
    ) -> Self {
        assert_eq!(coverage.len(), observations.len());
        assert_eq!(coverage.len(), variances.len());
        let mut info_vector = DVector::zeros(dim);
        let mut info_diag = DVector::zeros(dim);
        for ((cells, z), v) in coverage.iter().zip(&observations).zip(&variances) {
            assert_eq!(cells.len(), z.len());
            for (&cell, &obs) in cells.iter().zip(z.iter()) {
                info_vector[cell] += obs / v;
                info_diag[cell] += 1.0 / v;
            }
        }
        let support = (0..dim).filter(|&i| info_diag[i] > 0.0).collect();
        Self {
            coverage,
            observations,
            variances,
            info_vector,
            info_diag,
            support,
        }
    }

    /// A batch carrying no information (`Y = 0`, `y = 0`).
    pub fn empty(dim: usize) -> Self {
        Self::from_observations(dim, Vec::new(), Vec::new(), Vec::new())
    }

    pub fn dim(&self) -> usize {
        self.info_vector.len()
    }

    pub fn coverage(&self) -> &[Vec<usize>] {
        &self.coverage
    }

    pub fn observations(&self) -> &[DVector<f64>] {
        &self.observations
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    /// `y_k = H^T V^{-1} z_k`.
    pub fn info_vector(&self) -> &DVector<f64> {
        &self.info_vector
    }

    /// Diagonal of `Y_k = H^T V^{-1} H`.
    pub fn info_diag(&self) -> &DVector<f64> {
        &self.info_diag
    }

    /// Cells with `Y_nn > 0`, ascending.
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    /// Dense `Y_k`.
    pub fn info_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.info_diag)
    }

    /// Stacked `z_k`, agent-major.
    pub fn stacked(&self) -> DVector<f64> {
        let parts: Vec<f64> = self.observations.iter().flat_map(|z| z.iter().copied()).collect();
        DVector::from_vec(parts)
    }

    /// Diagonal of `V^{-1}`, agent-major to match [`Self::stacked`].
    pub fn noise_precision(&self) -> DVector<f64> {
        let parts: Vec<f64> = self
            .coverage
            .iter()
            .zip(&self.variances)
            .flat_map(|(cells, v)| std::iter::repeat_n(1.0 / v, cells.len()))
            .collect();
        DVector::from_vec(parts)
    }
}

/// Draws `z^i = H^i phi~ + n^i` for every agent.
///
/// Agent `i` at step `k` uses the noise stream `(trial_seed, k, i)`, so the
/// draws do not depend on the order agents are processed in.
pub fn measure(
    grid: &GridSpec,
    state: &DVector<f64>,
    positions: &[usize],
    sensors: &SensorModel,
    trial_seed: u64,
    step: usize,
) -> Result<MeasurementBatch, SensingError> {
    if positions.len() != sensors.agents() {
        return Err(SensingError::AgentCountMismatch {
            expected: sensors.agents(),
            actual: positions.len(),
        });
    }
    let mut coverage = Vec::with_capacity(positions.len());
    let mut observations = Vec::with_capacity(positions.len());
    for (agent, &position) in positions.iter().enumerate() {
        if !grid.contains(position) {
            return Err(SensingError::PositionOutOfRange {
                position,
                cells: grid.cells(),
            });
        }
        let cells = sensors.coverage(grid, position);
        let sd = sensors.variances[agent].sqrt();
        let mut noise = rng::noise_stream(trial_seed, step, agent);
        let z = DVector::from_iterator(
            cells.len(),
            cells.iter().map(|&c| {
                let n: f64 = StandardNormal.sample(&mut noise);
                state[c] + sd * n
            }),
        );
        coverage.push(cells);
        observations.push(z);
    }
    Ok(MeasurementBatch::from_observations(
        grid.cells(),
        coverage,
        observations,
        sensors.variances.clone(),
    ))
}

/// Dense stacked selection matrix `H_k` (M x N), agent-major rows.
pub fn materialize_h(batch: &MeasurementBatch, grid: &GridSpec) -> DMatrix<f64> {
    let rows: usize = batch.coverage.iter().map(Vec::len).sum();
    let mut h = DMatrix::zeros(rows, grid.cells());
    for (row, &cell) in batch.coverage.iter().flatten().enumerate() {
        h[(row, cell)] = 1.0;
    }
    h
}
