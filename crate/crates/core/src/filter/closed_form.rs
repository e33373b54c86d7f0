//! Batch (non-recursive) form of the discounted filter, used as an oracle.
//!
//! With `Upsilon_k = Sigma_0^{-1} + sum_{t<k} lambda_t A[t:1]^T Y_t A[t:1] + omega_{k-1} I`:
//! `Sigma_k = A[k:1] Upsilon_k^{-1} A[k:1]^T` and
//! `phi^_k = A[k:1] Upsilon_k^{-1} (Sigma_0^{-1} phi^_0 + sum_{t<k} lambda_t A[t:1]^T y_t)`.
//!
//! Inversions here go through nalgebra's own Cholesky so the oracle shares
//! no numerical code with the recursion it checks.

use nalgebra::{DMatrix, DVector};

use super::FilterError;
use crate::environment::{DynamicsModel, EnvironmentError, PropagationCache};
use crate::numerics::NumericsError;
use crate::sensing::MeasurementBatch;

#[derive(Debug, Clone)]
pub struct ClosedFormLedger {
    prior_precision: DMatrix<f64>,
    prior_info: DVector<f64>,
    info_vector_sum: DVector<f64>,
    info_matrix_sum: DMatrix<f64>,
    omega_prev: f64,
    propagation: PropagationCache,
}

impl ClosedFormLedger {
    pub fn new(mean0: &DVector<f64>, cov0: &DMatrix<f64>) -> Result<Self, FilterError> {
        let n = mean0.len();
        let prior_precision = oracle_inverse(cov0).ok_or(FilterError::Singular {
            step: 0,
            source: NumericsError::Singular { pivot: 0.0, floor: 0.0 },
        })?;
        Ok(Self {
            prior_info: &prior_precision * mean0,
            prior_precision,
            info_vector_sum: DVector::zeros(n),
            info_matrix_sum: DMatrix::zeros(n, n),
            omega_prev: 0.0,
            propagation: PropagationCache::new(n),
        })
    }

    /// Number of measurements absorbed so far.
    pub fn step(&self) -> usize {
        self.propagation.step()
    }

    /// Current `omega_{k-1}`.
    pub fn omega_prev(&self) -> f64 {
        self.omega_prev
    }

    /// Absorbs the measurement of step `k = self.step()` with weights
    /// `(lambda_k, omega_k)` and advances to `k + 1`.
    pub fn record(
        &mut self,
        batch: &MeasurementBatch,
        lambda: f64,
        omega: f64,
        model: &DynamicsModel,
    ) -> Result<(), EnvironmentError> {
        let p = self.propagation.product();
        let y = batch.info_diag();
        // A^T Y A with diagonal Y, touching only observed rows.
        for &s in batch.support() {
            let row = p.row(s);
            self.info_matrix_sum += row.transpose() * row * (lambda * y[s]);
        }
        self.info_vector_sum += p.tr_mul(batch.info_vector()) * lambda;
        self.omega_prev = omega;
        self.propagation.advance(model)?;
        Ok(())
    }

    /// `Upsilon_k` for the current step.
    pub fn upsilon(&self) -> DMatrix<f64> {
        let n = self.prior_info.len();
        &self.prior_precision + &self.info_matrix_sum + DMatrix::identity(n, n) * self.omega_prev
    }
}

fn oracle_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    match m.clone().cholesky() {
        Some(c) => Some(c.inverse()),
        None => m.clone().try_inverse(),
    }
}

/// `(phi^_k, Sigma_k)` from the ledger; `k` must equal the ledger's step.
pub fn closed_form_oracle(
    ledger: &ClosedFormLedger,
    _model: &DynamicsModel,
    k: usize,
) -> Result<(DVector<f64>, DMatrix<f64>), FilterError> {
    assert_eq!(k, ledger.step(), "ledger is at step {}", ledger.step());
    let upsilon = ledger.upsilon();
    let inv = oracle_inverse(&upsilon).ok_or(FilterError::Singular {
        step: k,
        source: NumericsError::Singular {
            pivot: 0.0,
            floor: 0.0,
        },
    })?;
    let a = ledger.propagation.product();
    let a_inv = a * &inv;
    let cov = &a_inv * a.transpose();
    let mean = a_inv * (&ledger.prior_info + &ledger.info_vector_sum);
    Ok((mean, cov))
}
