//! Discounted Kalman filter.
//!
//! Two equivalent parametrizations are provided. The standard form carries
//! `Sigma_k` and takes explicit weights `(lambda_k, omega_k, omega_{k-1})`;
//! the stable form carries `Sigma~_k = gamma^{1-k} Sigma_k` and never
//! touches the exponentially growing weights.
//!
//! The prediction step `A (Sigma_{k+1/2}^{-1} + c Gamma_k^{-1})^{-1} A^T`
//! is evaluated as `A (M - M (Gamma_k / c + M)^{-1} M) A^T` with
//! `M = Sigma_{k+1/2}`, so `Gamma_k^{-1}` and `A^{-1}` are never formed.
//! The measurement step uses a Woodbury update restricted to the cells the
//! agents actually observed.

mod closed_form;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::environment::Transition;
use crate::numerics::{spd_inverse, symmetrize, NumericsError};
use crate::sensing::MeasurementBatch;

pub use closed_form::{closed_form_oracle, ClosedFormLedger};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FilterError {
    #[error("covariance singular at step {step}: {source}")]
    Singular {
        step: usize,
        #[source]
        source: NumericsError,
    },
    #[error("omega decreased at step {step}: {previous} -> {current}")]
    DecreasingOmega {
        step: usize,
        previous: f64,
        current: f64,
    },
    #[error("invalid weight {0}")]
    InvalidWeight(f64),
    #[error("discount factor must lie in (0, 1], got {0}")]
    InvalidGamma(f64),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("filter is in the {0:?} form")]
    WrongForm(FilterForm),
    #[error("omega increased at step {0} but Gamma is not tracked")]
    GammaUntracked(usize),
}

/// How the per-step weights are generated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightMode {
    /// `lambda_k = min(1, lambda_bar / ||Y_k||_{Sigma_k})`, `omega = 0`.
    TypeI { lambda_bar: f64 },
    /// `lambda_k = omega_k = gamma^{-k}`.
    TypeII { gamma: f64 },
    /// `lambda = 1`, `omega = 0`.
    Undiscounted,
}

/// Weights applied at one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepWeights {
    pub lambda: f64,
    pub omega: f64,
    pub omega_prev: f64,
}

impl StepWeights {
    pub const UNDISCOUNTED: StepWeights = StepWeights {
        lambda: 1.0,
        omega: 0.0,
        omega_prev: 0.0,
    };
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightSchedule {
    mode: WeightMode,
}

impl WeightSchedule {
    pub fn new(mode: WeightMode) -> Result<Self, FilterError> {
        match mode {
            WeightMode::TypeI { lambda_bar } if !(lambda_bar > 0.0) => {
                Err(FilterError::InvalidWeight(lambda_bar))
            }
            WeightMode::TypeII { gamma } if !(gamma > 0.0 && gamma < 1.0) => {
                Err(FilterError::InvalidGamma(gamma))
            }
            _ => Ok(Self { mode }),
        }
    }

    pub fn mode(&self) -> WeightMode {
        self.mode
    }

    /// `omega_k`. The geometric schedule is extended to `k = -1`
    /// (`omega_{-1} = gamma`), which is what makes the standard recursion
    /// coincide with the stable form started from `Sigma~_0 = gamma Sigma_0`.
    pub fn omega(&self, k: i64) -> f64 {
        match self.mode {
            WeightMode::TypeII { gamma } => gamma.powi(-(k as i32)),
            _ => 0.0,
        }
    }

    /// Weights for step `k`; Type I needs the pre-update covariance.
    pub fn weights(&self, k: usize, batch: &MeasurementBatch, state: &FilterState) -> StepWeights {
        let k = k as i64;
        match self.mode {
            WeightMode::TypeI { lambda_bar } => StepWeights {
                lambda: state.cov.type1_lambda(batch, lambda_bar),
                omega: 0.0,
                omega_prev: 0.0,
            },
            WeightMode::TypeII { .. } => StepWeights {
                lambda: self.omega(k),
                omega: self.omega(k),
                omega_prev: self.omega(k - 1),
            },
            WeightMode::Undiscounted => StepWeights::UNDISCOUNTED,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FilterForm {
    Standard,
    Stable { gamma: f64 },
}

/// Covariance storage. A diagonal covariance stays diagonal under
/// identity dynamics, which reduces every step to elementwise work.
#[derive(Debug, Clone, PartialEq)]
enum Covariance {
    Diagonal(DVector<f64>),
    Dense(DMatrix<f64>),
}

impl Covariance {
    fn from_matrix(m: DMatrix<f64>) -> Self {
        let n = m.nrows();
        let off_diagonal_zero =
            (0..n).all(|j| (0..n).all(|i| i == j || m[(i, j)] == 0.0));
        if off_diagonal_zero {
            Covariance::Diagonal(m.diagonal())
        } else {
            Covariance::Dense(m)
        }
    }

    fn diagonal(&self) -> DVector<f64> {
        match self {
            Covariance::Diagonal(d) => d.clone(),
            Covariance::Dense(m) => m.diagonal(),
        }
    }

    fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Covariance::Diagonal(d) => DMatrix::from_diagonal(d),
            Covariance::Dense(m) => m.clone(),
        }
    }

    fn trace(&self) -> f64 {
        match self {
            Covariance::Diagonal(d) => d.sum(),
            Covariance::Dense(m) => m.trace(),
        }
    }

    fn type1_lambda(&self, batch: &MeasurementBatch, lambda_bar: f64) -> f64 {
        let s = batch.support();
        let y = batch.info_diag();
        let top = match self {
            Covariance::Diagonal(d) => s.iter().map(|&i| y[i] * y[i] * d[i]).fold(0.0, f64::max),
            Covariance::Dense(m) => support_norm_squared(m, s, y),
        };
        cap_lambda(top.max(0.0).sqrt(), lambda_bar)
    }
}

fn cap_lambda(norm: f64, lambda_bar: f64) -> f64 {
    if norm == 0.0 {
        1.0
    } else {
        (lambda_bar / norm).min(1.0)
    }
}

/// `lambda_max(Y Sigma Y)` restricted to the support of the diagonal `Y`.
fn support_norm_squared(sigma: &DMatrix<f64>, support: &[usize], y: &DVector<f64>) -> f64 {
    if support.is_empty() {
        return 0.0;
    }
    let m = support.len();
    let block = DMatrix::from_fn(m, m, |a, b| {
        let (i, j) = (support[a], support[b]);
        y[i] * sigma[(i, j)] * y[j]
    });
    block.symmetric_eigenvalues().max()
}

/// `min(1, lambda_bar / ||Y||_Sigma)` with `||Y||_Sigma = sqrt(lambda_max(Y Sigma Y))`.
pub fn type1_lambda(batch: &MeasurementBatch, sigma: &DMatrix<f64>, lambda_bar: f64) -> f64 {
    let norm2 = support_norm_squared(sigma, batch.support(), batch.info_diag());
    cap_lambda(norm2.max(0.0).sqrt(), lambda_bar)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    form: FilterForm,
    mean: DVector<f64>,
    cov: Covariance,
    /// `Gamma_k`; `None` while it is still the identity.
    gamma_aux: Option<DMatrix<f64>>,
    track_gamma: bool,
    step: usize,
}

impl FilterState {
    /// Standard form at `k = 0` with prior `(phi^_0, Sigma_0)`.
    pub fn standard(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self, FilterError> {
        Self::build(FilterForm::Standard, mean, cov)
    }

    /// Stable form at `k = 0` for the prior `Sigma_0`; stores
    /// `Sigma~_0 = gamma Sigma_0`.
    pub fn stable(mean: DVector<f64>, cov: DMatrix<f64>, gamma: f64) -> Result<Self, FilterError> {
        check_gamma(gamma)?;
        Self::build(FilterForm::Stable { gamma }, mean, cov * gamma)
    }

    /// Stable form with `Sigma~_0` given directly.
    pub fn stable_scaled(
        mean: DVector<f64>,
        scaled_cov: DMatrix<f64>,
        gamma: f64,
    ) -> Result<Self, FilterError> {
        check_gamma(gamma)?;
        Self::build(FilterForm::Stable { gamma }, mean, scaled_cov)
    }

    fn build(form: FilterForm, mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self, FilterError> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(FilterError::DimensionMismatch {
                expected: mean.len(),
                actual: cov.nrows(),
            });
        }
        // Reject non-SPD priors up front.
        spd_inverse(&cov).map_err(|source| FilterError::Singular { step: 0, source })?;
        Ok(Self {
            form,
            mean,
            cov: Covariance::from_matrix(cov),
            gamma_aux: None,
            track_gamma: true,
            step: 0,
        })
    }

    pub fn form(&self) -> FilterForm {
        self.form
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// The stored covariance: `Sigma_k`, or `Sigma~_k` in the stable form.
    pub fn covariance(&self) -> DMatrix<f64> {
        self.cov.to_dense()
    }

    /// Diagonal of the stored covariance.
    pub fn covariance_diagonal(&self) -> DVector<f64> {
        self.cov.diagonal()
    }

    pub fn covariance_trace(&self) -> f64 {
        self.cov.trace()
    }

    /// `Sigma_k` regardless of form (`gamma^{k-1} Sigma~_k` when stable).
    pub fn standard_covariance(&self) -> DMatrix<f64> {
        match self.form {
            FilterForm::Standard => self.cov.to_dense(),
            FilterForm::Stable { gamma } => self.cov.to_dense() * gamma.powi(self.step as i32 - 1),
        }
    }

    /// Stops maintaining `Gamma_k`. Only valid while `omega` stays
    /// constant; a later increase is rejected.
    pub fn without_gamma_tracking(mut self) -> Self {
        self.track_gamma = false;
        self.gamma_aux = None;
        self
    }

    /// `Gamma_k`, or `None` when tracking is off.
    pub fn gamma_aux(&self) -> Option<DMatrix<f64>> {
        if !self.track_gamma {
            return None;
        }
        Some(match &self.gamma_aux {
            Some(g) => g.clone(),
            None => DMatrix::identity(self.dim(), self.dim()),
        })
    }

    #[cfg(test)]
    fn force_dense(mut self) -> Self {
        self.cov = Covariance::Dense(self.cov.to_dense());
        self
    }
}

fn check_gamma(gamma: f64) -> Result<(), FilterError> {
    if gamma > 0.0 && gamma <= 1.0 {
        Ok(())
    } else {
        Err(FilterError::InvalidGamma(gamma))
    }
}

/// One step of the standard recursion.
pub fn filter_step_standard(
    state: &FilterState,
    batch: &MeasurementBatch,
    a_next: &Transition,
    weights: StepWeights,
) -> Result<FilterState, FilterError> {
    if state.form != FilterForm::Standard {
        return Err(FilterError::WrongForm(state.form));
    }
    let StepWeights {
        lambda,
        omega,
        omega_prev,
    } = weights;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(FilterError::InvalidWeight(lambda));
    }
    let c = omega - omega_prev;
    if c < 0.0 {
        return Err(FilterError::DecreasingOmega {
            step: state.step,
            previous: omega_prev,
            current: omega,
        });
    }
    advance(state, batch, a_next, 1.0, lambda, c)
}

/// One step of the stable recursion with the state's own `gamma`.
pub fn filter_step_stable(
    state: &FilterState,
    batch: &MeasurementBatch,
    a_next: &Transition,
) -> Result<FilterState, FilterError> {
    let FilterForm::Stable { gamma } = state.form else {
        return Err(FilterError::WrongForm(state.form));
    };
    advance(state, batch, a_next, gamma, 1.0, 1.0 - gamma)
}

/// Shared body: measurement update with `(s Sigma^{-1} + w Y)^{-1}` followed
/// by the prediction with contraction `c`.
fn advance(
    state: &FilterState,
    batch: &MeasurementBatch,
    a: &Transition,
    s: f64,
    w: f64,
    c: f64,
) -> Result<FilterState, FilterError> {
    let n = state.dim();
    for actual in [batch.dim(), a.dim()] {
        if actual != n {
            return Err(FilterError::DimensionMismatch { expected: n, actual });
        }
    }
    let step = state.step;
    if c != 0.0 && !state.track_gamma {
        return Err(FilterError::GammaUntracked(step));
    }
    let singular = |source| FilterError::Singular { step, source };
    let y = batch.info_diag();
    let info = batch.info_vector();
    let diagonal_path = a.is_identity() && state.gamma_aux.is_none();

    let (cov, mean) = match (&state.cov, diagonal_path) {
        (Covariance::Diagonal(d), true) => {
            let mut cov = DVector::zeros(n);
            let mut mean = DVector::zeros(n);
            for i in 0..n {
                let half = 1.0 / (s / d[i] + w * y[i]);
                let m_half = state.mean[i] + w * half * (info[i] - y[i] * state.mean[i]);
                if c == 0.0 {
                    cov[i] = half;
                    mean[i] = m_half;
                } else {
                    let p = 1.0 / (1.0 / half + c);
                    cov[i] = p;
                    mean[i] = m_half - c * p * m_half;
                }
                if !(cov[i] > 0.0 && cov[i].is_finite()) {
                    return Err(singular(NumericsError::Singular {
                        pivot: cov[i],
                        floor: 0.0,
                    }));
                }
            }
            (Covariance::Diagonal(cov), mean)
        }
        _ => {
            let sigma = state.cov.to_dense();
            let (half, m_half) =
                measurement_update(&sigma, &state.mean, batch, s, w).map_err(singular)?;
            let (p, m) = if c == 0.0 {
                (half, m_half)
            } else {
                let mut shifted = match &state.gamma_aux {
                    Some(g) => g / c,
                    None => DMatrix::from_diagonal_element(n, n, 1.0 / c),
                };
                shifted += &half;
                let q = spd_inverse(&shifted).map_err(singular)?;
                let mq = &half * q;
                let mut p = &half - &mq * &half;
                symmetrize(&mut p);
                let m = &m_half - &mq * &m_half;
                (p, m)
            };
            let cov = a.congruence(&p);
            if cov.diagonal().iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(singular(NumericsError::Singular {
                    pivot: cov.diagonal().min(),
                    floor: 0.0,
                }));
            }
            (Covariance::Dense(cov), a.apply(&m))
        }
    };

    let gamma_aux = match (&state.gamma_aux, a.is_identity()) {
        _ if !state.track_gamma => None,
        (None, true) => None,
        (None, false) => Some(a.congruence(&DMatrix::identity(n, n))),
        (Some(g), _) => Some(a.congruence(g)),
    };

    Ok(FilterState {
        form: state.form,
        mean,
        cov,
        gamma_aux,
        track_gamma: state.track_gamma,
        step: step + 1,
    })
}

/// `((s Sigma^{-1} + w Y)^{-1}, phi^ + w Sigma_half (y - Y phi^))` by a
/// Woodbury update on the observed cells `S`:
/// `Sigma_half = (Sigma - Sigma_{:,S} ((s/w) Y_S^{-1} + Sigma_SS)^{-1} Sigma_{S,:}) / s`.
fn measurement_update(
    sigma: &DMatrix<f64>,
    mean: &DVector<f64>,
    batch: &MeasurementBatch,
    s: f64,
    w: f64,
) -> Result<(DMatrix<f64>, DVector<f64>), NumericsError> {
    let support = batch.support();
    let y = batch.info_diag();
    let mut half = if support.is_empty() {
        sigma.clone()
    } else {
        let cols = sigma.select_columns(support);
        let mut core = cols.select_rows(support);
        for (a, &i) in support.iter().enumerate() {
            core[(a, a)] += s / (w * y[i]);
        }
        let core_inv = spd_inverse(&core)?;
        sigma - &cols * core_inv * cols.transpose()
    };
    if s != 1.0 {
        half /= s;
    }
    symmetrize(&mut half);
    let residual = batch.info_vector() - y.component_mul(mean);
    let m_half = mean + &half * residual * w;
    Ok((half, m_half))
}
