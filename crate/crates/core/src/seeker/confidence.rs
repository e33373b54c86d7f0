use serde::Serialize;

use super::SeekerError;
use crate::environment::BudgetModel;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ConfidenceMode {
    /// External disturbances; `lambda_bar` may be infinite when the
    /// budget is zero.
    TypeI { lambda_bar: f64, budget: BudgetModel },
    /// Internal disturbances with discount `gamma` in `(0, 1]`.
    TypeII { gamma: f64 },
}

/// Known constants entering the confidence radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConfidenceConstants {
    pub dim: usize,
    pub delta: f64,
    /// `sigma_lower I <= Sigma_0 <= sigma_upper I`.
    pub sigma_lower: f64,
    pub sigma_upper: f64,
    pub v_lower: f64,
    pub v_upper: f64,
    pub alpha_lower: f64,
    pub alpha_upper: f64,
    /// Bound on `||phi^_0 - phi_0||`.
    pub prior_error_bound: f64,
    /// Bound on `||phi~_k||` (Type II).
    pub state_bound: f64,
    /// Calibration multiplier `c_beta`.
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfidenceSchedule {
    mode: ConfidenceMode,
    constants: ConfidenceConstants,
}

impl ConfidenceSchedule {
    pub fn new(mode: ConfidenceMode, constants: ConfidenceConstants) -> Result<Self, SeekerError> {
        let c = &constants;
        let bad = |what: &str| Err(SeekerError::InvalidParameter(what.to_string()));
        if !(c.delta > 0.0 && c.delta < 1.0) {
            return bad("delta must lie in (0, 1)");
        }
        if c.dim == 0 {
            return bad("dimension must be positive");
        }
        if !(c.sigma_lower > 0.0 && c.sigma_lower <= c.sigma_upper) {
            return bad("sigma bounds");
        }
        if !(c.v_lower > 0.0 && c.v_lower <= c.v_upper) {
            return bad("noise variance bounds");
        }
        if !(c.alpha_lower > 0.0 && c.alpha_lower <= c.alpha_upper) {
            return bad("alpha bounds");
        }
        if !(c.prior_error_bound >= 0.0 && c.state_bound >= 0.0) {
            return bad("error bounds must be non-negative");
        }
        if !(c.scale > 0.0) {
            return bad("c_beta must be positive");
        }
        match &mode {
            ConfidenceMode::TypeI { lambda_bar, .. } if !(*lambda_bar > 0.0) => bad("lambda_bar"),
            ConfidenceMode::TypeII { gamma } if !(*gamma > 0.0 && *gamma <= 1.0) => bad("gamma"),
            _ => Ok(Self { mode, constants }),
        }
    }

    pub fn mode(&self) -> &ConfidenceMode {
        &self.mode
    }

    pub fn constants(&self) -> &ConfidenceConstants {
        &self.constants
    }

    pub fn c1(&self) -> f64 {
        self.constants.prior_error_bound / self.constants.sigma_lower.sqrt()
    }

    pub fn c2(&self) -> f64 {
        let c = &self.constants;
        c.v_upper * c.v_upper * f64::max(2.0, 2.0 / c.v_lower).sqrt()
    }

    pub fn c3(&self) -> f64 {
        self.constants.state_bound / self.constants.alpha_lower.sqrt()
    }

    fn sqrt_n(&self) -> f64 {
        (self.constants.dim as f64).sqrt()
    }

    /// `log(x / delta^{2/N})` written to avoid underflow of `delta^{2/N}`.
    fn log_term(&self, x: f64) -> f64 {
        let c = &self.constants;
        let v = x.ln() - (2.0 / c.dim as f64) * c.delta.ln();
        assert!(v > 0.0, "confidence log argument not above one");
        v.sqrt()
    }

    /// `sum_{t<k} gamma^{2(k-t-1)}`.
    fn geometric_sum(gamma: f64, k: usize) -> f64 {
        if gamma == 1.0 {
            k as f64
        } else {
            let g2 = gamma * gamma;
            (1.0 - g2.powi(k as i32)) / (1.0 - g2)
        }
    }

    /// `beta_k(delta)`, the radius for the standard covariance `Sigma_k`.
    /// For Type II with `gamma < 1` this grows like `gamma^{-k/2}`.
    pub fn beta(&self, k: usize) -> f64 {
        let c = &self.constants;
        let sn = self.sqrt_n();
        match &self.mode {
            ConfidenceMode::TypeI { lambda_bar, budget } => {
                let budget_term = if budget.at(k) == 0.0 { 0.0 } else { lambda_bar * budget.at(k) };
                let ratio = c.sigma_upper / c.sigma_lower
                    + c.alpha_upper * c.sigma_upper * k as f64 / (c.v_lower * c.v_lower);
                c.scale * sn * (budget_term + self.c1() + self.c2() * sn * self.log_term(ratio))
            }
            ConfidenceMode::TypeII { gamma } => {
                let growth = gamma.powf((1.0 - k as f64) / 2.0);
                let ratio =
                    1.0 + c.alpha_upper / (c.v_lower * c.v_lower) * Self::geometric_sum(*gamma, k);
                c.scale
                    * sn
                    * (self.c1() + growth * (self.c3() + self.c2() * sn * self.log_term(ratio)))
            }
        }
    }

    /// Radius applied to the square root of the stored covariance diagonal:
    /// `beta_k` for Type I, and `beta_k gamma^{(k-1)/2}` for Type II, whose
    /// filter stores `Sigma~_k = gamma^{1-k} Sigma_k`. The Type II product is
    /// evaluated term by term so it stays finite for every `k`.
    pub fn ducb_radius(&self, k: usize) -> f64 {
        match &self.mode {
            ConfidenceMode::TypeI { .. } => self.beta(k),
            ConfidenceMode::TypeII { gamma } => {
                let c = &self.constants;
                let sn = self.sqrt_n();
                let shrink = gamma.powf((k as f64 - 1.0) / 2.0);
                let ratio =
                    1.0 + c.alpha_upper / (c.v_lower * c.v_lower) * Self::geometric_sum(*gamma, k);
                c.scale
                    * sn
                    * (self.c1() * shrink + self.c3() + self.c2() * sn * self.log_term(ratio))
            }
        }
    }
}
