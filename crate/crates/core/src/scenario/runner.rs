use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{BudgetConfig, FilterMode, ScenarioConfig, ScheduleConfig};
use super::ScenarioError;
use crate::environment::{
    build_convection_diffusion, propagate, verify_assumption1, AlphaBounds, Assumption1Report,
    BudgetModel, ConvectionDiffusion, DisturbanceKind, DisturbanceProfile, DisturbanceSchedule,
    DynamicsModel, EnvironmentState, GridSpec, InjectionWindow,
};
use crate::filter::{
    closed_form_oracle, filter_step_stable, filter_step_standard, ClosedFormLedger, FilterState,
    StepWeights, WeightMode, WeightSchedule,
};
use crate::regret::regret_on;
use crate::rng::{self, StreamDomain};
use crate::seeker::{
    assign_agents, ducb, select_positions, ConfidenceConstants, ConfidenceMode, ConfidenceSchedule,
};
use crate::sensing::{measure, SensorModel};

/// A validated configuration with everything shared across trials built.
#[derive(Debug, Clone)]
pub struct Scenario {
    config: ScenarioConfig,
    grid: GridSpec,
    model: DynamicsModel,
    assumption: Assumption1Report,
    initial_field: DVector<f64>,
    sensors: SensorModel,
    confidence: ConfidenceSchedule,
    budget: BudgetModel,
    pattern_norm: f64,
    lambda_bar: f64,
    initial_positions: Vec<usize>,
}

/// Diagnostics of one step `k`, all taken before the step's filter update.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub regret: f64,
    pub cumulative: f64,
    /// Cells measured at `k`, ascending.
    pub chosen: Vec<usize>,
    pub oracle: Vec<usize>,
    /// Radius of the D-UCB that selected the step's cells.
    pub beta: f64,
    /// `lambda_k` used by the step's measurement update.
    pub lambda: f64,
    /// Trace of the stored covariance (`Sigma~_k` in the stable form).
    pub trace_sigma: f64,
    /// `||phi^_k - phi~_k||`.
    pub est_err_norm: f64,
    /// Whether `mu_k` dominated the objective state elementwise.
    pub covered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Injection {
    pub start: usize,
    pub end: usize,
    pub cells: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub seed: u64,
    pub records: Vec<StepRecord>,
    pub injections: Vec<Injection>,
    pub wall_clock: Duration,
}

impl TrialResult {
    pub fn instantaneous(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.regret).collect()
    }

    pub fn cumulative(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.cumulative)
    }

    /// Whether `phi_k <= mu_k` held at every step.
    pub fn always_covered(&self) -> bool {
        self.records.iter().all(|r| r.covered)
    }
}

/// Steps from each injection start until the agents first measure an
/// injected cell that is also an oracle cell; `None` if that does not happen
/// before the next injection (or the horizon).
pub fn reacquisition_delays(trial: &TrialResult) -> Vec<Option<usize>> {
    let horizon = trial.records.len();
    trial
        .injections
        .iter()
        .enumerate()
        .map(|(w, inj)| {
            let stop = trial.injections.get(w + 1).map_or(horizon, |n| n.start).min(horizon);
            (inj.start..stop).find_map(|k| {
                let rec = &trial.records[k];
                rec.chosen
                    .iter()
                    .any(|c| inj.cells.contains(c) && rec.oracle.contains(c))
                    .then_some(k - inj.start)
            })
        })
        .collect()
}

enum Stepper {
    Weighted(WeightSchedule),
    Undiscounted,
    Stable,
}

impl Scenario {
    pub fn build(config: ScenarioConfig) -> Result<Self, ScenarioError> {
        config.validate()?;
        let grid = GridSpec::new(config.grid.side);
        let n = grid.cells();
        let d = &config.dynamics;
        let mut model = build_convection_diffusion(
            &grid,
            &ConvectionDiffusion {
                diffusion: d.diffusion,
                velocity: d.velocity,
                dt: d.dt,
                renormalize: d.renormalize,
                singular_floor: d.singular_floor,
            },
        )?;
        let mut assumption = verify_assumption1(&model, config.horizon, d.assumption_samples);
        let bounds = match d.alpha_bounds {
            Some([lo, hi]) => AlphaBounds::new(lo, hi)?,
            None => assumption.empirical_bounds()?,
        };
        model = model.with_bounds(bounds);
        assumption.within_configured = Some(assumption.covered_by(bounds));
        if assumption.within_configured == Some(false) {
            log::warn!(
                "declared alpha bounds [{}, {}] do not cover the sampled range [{:e}, {:e}]",
                bounds.lower,
                bounds.upper,
                assumption.empirical_lower,
                assumption.empirical_upper
            );
        }

        let initial_field = initial_field(&config, &grid)?;
        let variances = config.noise_variances();
        let sensors = SensorModel::new(config.agents.radius, variances.clone())?;
        let initial_positions = match &config.agents.initial_positions {
            Some(ps) => ps.iter().map(|c| grid.index(c[0], c[1])).collect(),
            None => spread_positions(&grid, config.agents.count),
        };

        let pattern_norm = pattern_norm_bound(&config);
        let budget = match &config.disturbance.budget {
            BudgetConfig::Zero {} => BudgetModel::Zero,
            BudgetConfig::Constant { value } => BudgetModel::Constant(*value),
            BudgetConfig::Envelope {} => match &config.disturbance.schedule {
                ScheduleConfig::None {} => BudgetModel::Zero,
                ScheduleConfig::Slow { start } => BudgetModel::InverseSquare {
                    start: *start,
                    pattern_norm,
                },
                ScheduleConfig::Windows { windows } => BudgetModel::Windows {
                    windows: windows.iter().map(|[s, e]| (*s, *e)).collect(),
                    pattern_norm,
                },
            },
        };
        let sqrt_n = (n as f64).sqrt();
        let lambda_bar = config.filter.lambda_bar.unwrap_or_else(|| {
            let b = budget.at(config.horizon);
            if b > 0.0 {
                sqrt_n / b
            } else {
                f64::INFINITY
            }
        });

        let prior_mean = DVector::from_element(n, config.filter.prior_mean);
        let field_norm = initial_field.norm();
        let prior_error_bound = config
            .confidence
            .prior_error_bound
            .unwrap_or(prior_mean.norm() + field_norm);
        let state_bound = config
            .disturbance
            .state_bound
            .unwrap_or(field_norm + budget.total().unwrap_or(0.0));
        let v_lower = variances.iter().copied().fold(f64::INFINITY, f64::min);
        let v_upper = variances.iter().copied().fold(0.0, f64::max);
        let mode = match config.disturbance.kind {
            DisturbanceKind::TypeI => ConfidenceMode::TypeI {
                lambda_bar,
                budget: budget.clone(),
            },
            DisturbanceKind::TypeII => ConfidenceMode::TypeII {
                gamma: config.effective_gamma(),
            },
        };
        let confidence = ConfidenceSchedule::new(
            mode,
            ConfidenceConstants {
                dim: n,
                delta: config.confidence.delta,
                sigma_lower: config.filter.prior_variance,
                sigma_upper: config.filter.prior_variance,
                v_lower,
                v_upper,
                alpha_lower: bounds.lower,
                alpha_upper: bounds.upper,
                prior_error_bound,
                state_bound,
                scale: config.confidence.scale,
            },
        )?;

        Ok(Self {
            config,
            grid,
            model,
            assumption,
            initial_field,
            sensors,
            confidence,
            budget,
            pattern_norm,
            lambda_bar,
            initial_positions,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn model(&self) -> &DynamicsModel {
        &self.model
    }

    pub fn assumption_report(&self) -> &Assumption1Report {
        &self.assumption
    }

    pub fn initial_field(&self) -> &DVector<f64> {
        &self.initial_field
    }

    pub fn confidence(&self) -> &ConfidenceSchedule {
        &self.confidence
    }

    pub fn budget_model(&self) -> &BudgetModel {
        &self.budget
    }

    pub fn pattern_norm_bound(&self) -> f64 {
        self.pattern_norm
    }

    pub fn lambda_bar(&self) -> f64 {
        self.lambda_bar
    }

    pub fn initial_positions(&self) -> &[usize] {
        &self.initial_positions
    }

    /// Disturbance sequence of one trial; random patterns come from the
    /// trial's disturbance stream.
    pub fn disturbance(&self, trial_seed: u64) -> (DisturbanceSchedule, Vec<Injection>) {
        let n = self.grid.cells();
        let dist = &self.config.disturbance;
        let pattern = |w: usize| -> (DVector<f64>, Vec<usize>) {
            let mut v = DVector::zeros(n);
            let mut cells = Vec::new();
            match &dist.pattern.fixed {
                Some(fixed) => {
                    for e in &fixed[w] {
                        let c = self.grid.index(e.cell[0], e.cell[1]);
                        v[c] += e.magnitude;
                        cells.push(c);
                    }
                }
                None => {
                    let mut rng = rng::stream(trial_seed, StreamDomain::Disturbance, w as u64);
                    let [lo, hi] = dist.pattern.magnitude;
                    for c in sample(&mut rng, n, dist.pattern.cells).into_vec() {
                        v[c] = if lo == hi { lo } else { rng.random_range(lo..hi) };
                        cells.push(c);
                    }
                }
            }
            cells.sort_unstable();
            cells.dedup();
            (v, cells)
        };
        let (profile, injections) = match &dist.schedule {
            ScheduleConfig::None {} => (DisturbanceProfile::None, Vec::new()),
            ScheduleConfig::Slow { start } => {
                let (p, cells) = pattern(0);
                (
                    DisturbanceProfile::InverseSquare { start: *start, pattern: p },
                    vec![Injection {
                        start: *start,
                        end: self.config.horizon,
                        cells,
                    }],
                )
            }
            ScheduleConfig::Windows { windows } => {
                let mut ws = Vec::new();
                let mut injections = Vec::new();
                for (w, [s, e]) in windows.iter().enumerate() {
                    let (p, cells) = pattern(w);
                    ws.push(InjectionWindow {
                        start: *s,
                        end: *e,
                        pattern: p,
                    });
                    injections.push(Injection {
                        start: *s,
                        end: *e,
                        cells,
                    });
                }
                (DisturbanceProfile::Windows(ws), injections)
            }
        };
        let mut schedule = DisturbanceSchedule::new(dist.kind, profile, n);
        if let Some(b) = dist.state_bound {
            schedule = schedule.with_state_bound(b);
        }
        (schedule, injections)
    }

    fn initial_filter(&self) -> Result<(FilterState, Stepper), ScenarioError> {
        let n = self.grid.cells();
        let mean = DVector::from_element(n, self.config.filter.prior_mean);
        let cov = DMatrix::identity(n, n) * self.config.filter.prior_variance;
        Ok(match self.config.filter.mode {
            // omega is identically zero in Type I, so Gamma is never consulted.
            FilterMode::TypeI => (
                FilterState::standard(mean, cov)?.without_gamma_tracking(),
                Stepper::Weighted(WeightSchedule::new(WeightMode::TypeI {
                    lambda_bar: self.lambda_bar,
                })?),
            ),
            FilterMode::TypeII => (
                FilterState::stable(mean, cov, self.config.effective_gamma())?,
                Stepper::Stable,
            ),
            FilterMode::Undiscounted => (
                FilterState::standard(mean, cov)?.without_gamma_tracking(),
                Stepper::Undiscounted,
            ),
        })
    }

    /// Runs one trial of the seeking loop.
    pub fn run_trial(&self, trial_seed: u64) -> Result<TrialResult, ScenarioError> {
        let started = Instant::now();
        let cfg = &self.config;
        let kind = cfg.disturbance.kind;
        let agents = cfg.agents.count;
        let (schedule, injections) = self.disturbance(trial_seed);
        let (mut filter, stepper) = self.initial_filter()?;
        let mut env = EnvironmentState::new(self.initial_field.clone());
        let mut positions = self.initial_positions.clone();
        let mut beta = self.confidence.ducb_radius(0);
        let mut mu = ducb(&filter, beta)?;
        let mut cumulative = 0.0;
        let mut records = Vec::with_capacity(cfg.horizon);

        for k in 0..cfg.horizon {
            let at = |e: ScenarioError| e.at_step(k);
            let batch = measure(&self.grid, env.disturbed(), &positions, &self.sensors, trial_seed, k)
                .map_err(|e| at(e.into()))?;
            let a = self.model.transition(k + 1).map_err(|e| at(e.into()))?;
            let (next, lambda) = match &stepper {
                Stepper::Weighted(w) => {
                    let weights = w.weights(k, &batch, &filter);
                    (filter_step_standard(&filter, &batch, a, weights), weights.lambda)
                }
                Stepper::Undiscounted => (
                    filter_step_standard(&filter, &batch, a, StepWeights::UNDISCOUNTED),
                    1.0,
                ),
                Stepper::Stable => (filter_step_stable(&filter, &batch, a), 1.0),
            };
            let next = next.map_err(|e| at(e.into()))?;

            let objective = env.objective_state(kind);
            let covered = objective.iter().zip(mu.iter()).all(|(p, m)| p <= m);
            let mut chosen = positions.clone();
            chosen.sort_unstable();
            let regret = regret_on(k, objective, &chosen, agents, cumulative).map_err(|e| at(e.into()))?;
            cumulative = regret.cumulative;
            records.push(StepRecord {
                step: k,
                regret: regret.instantaneous,
                cumulative,
                chosen,
                oracle: regret.oracle,
                beta,
                lambda,
                trace_sigma: filter.covariance_trace(),
                est_err_norm: (filter.mean() - env.disturbed()).norm(),
                covered,
            });

            filter = next;
            beta = self.confidence.ducb_radius(k + 1);
            let decision = select_positions(ducb(&filter, beta).map_err(|e| at(e.into()))?, beta, agents)
                .map_err(|e| at(e.into()))?;
            env = propagate(&env, &self.model, &schedule).map_err(|e| at(e.into()))?;
            positions = assign_agents(&self.grid, &decision.positions, &positions);
            mu = decision.mu;
        }

        Ok(TrialResult {
            seed: trial_seed,
            records,
            injections,
            wall_clock: started.elapsed(),
        })
    }

    /// Runs the standard recursion next to the closed form for `steps`
    /// steps of the scenario and reports the largest relative gaps.
    pub fn oracle_check(&self, steps: usize, trial_seed: u64) -> Result<OracleReport, ScenarioError> {
        let n = self.grid.cells();
        if n > ORACLE_MAX_CELLS {
            return Err(ScenarioError::Config(format!(
                "oracle check is limited to {ORACLE_MAX_CELLS} cells, scenario has {n}"
            )));
        }
        let cfg = &self.config;
        let steps = steps.min(cfg.horizon);
        let gamma = cfg.effective_gamma();
        let (schedule, _) = self.disturbance(trial_seed);
        let mean0 = DVector::from_element(n, cfg.filter.prior_mean);
        let cov0 = DMatrix::identity(n, n) * cfg.filter.prior_variance;
        let mut filter = FilterState::standard(mean0.clone(), cov0.clone())?;
        let mut ledger = ClosedFormLedger::new(&mean0, &cov0)?;
        let mut env = EnvironmentState::new(self.initial_field.clone());
        let mut positions = self.initial_positions.clone();
        let (mut worst_mean, mut worst_cov) = (0.0f64, 0.0f64);
        let mut omega_prev = 0.0;
        for k in 0..steps {
            let at = |e: ScenarioError| e.at_step(k);
            let batch = measure(&self.grid, env.disturbed(), &positions, &self.sensors, trial_seed, k)
                .map_err(|e| at(e.into()))?;
            let weights = match cfg.filter.mode {
                FilterMode::TypeI => StepWeights {
                    lambda: WeightSchedule::new(WeightMode::TypeI {
                        lambda_bar: self.lambda_bar,
                    })?
                    .weights(k, &batch, &filter)
                    .lambda,
                    omega: 0.0,
                    omega_prev: 0.0,
                },
                FilterMode::TypeII if gamma < 1.0 => {
                    let w = gamma.powi(-(k as i32));
                    StepWeights {
                        lambda: w,
                        omega: w,
                        omega_prev,
                    }
                }
                _ => StepWeights::UNDISCOUNTED,
            };
            omega_prev = weights.omega;
            let a = self.model.transition(k + 1).map_err(|e| at(e.into()))?;
            filter = filter_step_standard(&filter, &batch, a, weights).map_err(|e| at(e.into()))?;
            ledger
                .record(&batch, weights.lambda, weights.omega, &self.model)
                .map_err(|e| at(e.into()))?;
            let (m, s) = closed_form_oracle(&ledger, &self.model, k + 1).map_err(|e| at(e.into()))?;
            worst_mean = worst_mean.max((filter.mean() - &m).amax() / m.amax().max(f64::MIN_POSITIVE));
            worst_cov = worst_cov.max((filter.covariance() - &s).amax() / s.amax().max(f64::MIN_POSITIVE));

            let beta = match cfg.filter.mode {
                FilterMode::TypeII => self.confidence.beta(k + 1),
                _ => self.confidence.ducb_radius(k + 1),
            };
            let decision = select_positions(ducb(&filter, beta)?, beta, cfg.agents.count)?;
            env = propagate(&env, &self.model, &schedule).map_err(|e| at(e.into()))?;
            positions = assign_agents(&self.grid, &decision.positions, &positions);
        }
        Ok(OracleReport {
            steps,
            cells: n,
            max_relative_mean_error: worst_mean,
            max_relative_cov_error: worst_cov,
        })
    }
}

/// Largest grid accepted by the closed-form check.
pub const ORACLE_MAX_CELLS: usize = 900;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub steps: usize,
    pub cells: usize,
    pub max_relative_mean_error: f64,
    pub max_relative_cov_error: f64,
}

/// Builds the scenario and runs a single trial.
pub fn run_trial(config: &ScenarioConfig, trial_seed: u64) -> Result<TrialResult, ScenarioError> {
    Scenario::build(config.clone())?.run_trial(trial_seed)
}

fn initial_field(config: &ScenarioConfig, grid: &GridSpec) -> Result<DVector<f64>, ScenarioError> {
    let n = grid.cells();
    let mut phi = DVector::from_element(n, config.field.background);
    for s in &config.field.sources {
        if s.spread == 0.0 {
            phi[grid.index(s.cell[0], s.cell[1])] += s.magnitude;
            continue;
        }
        let center = grid.index(s.cell[0], s.cell[1]);
        let denom = 2.0 * s.spread * s.spread;
        for i in 0..n {
            phi[i] += s.magnitude * (-(grid.squared_distance(i, center) as f64) / denom).exp();
        }
    }
    if let Some(path) = &config.field.file {
        let io = |e: &dyn std::fmt::Display| ScenarioError::Io {
            path: path.clone(),
            message: e.to_string(),
        };
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| io(&e))?;
        let mut values = Vec::with_capacity(n);
        for row in reader.records() {
            let row = row.map_err(|e| io(&e))?;
            if row.len() != grid.side() {
                return Err(io(&format!("expected {} columns, found {}", grid.side(), row.len())));
            }
            for field in row.iter() {
                values.push(field.parse::<f64>().map_err(|e| io(&e))?);
            }
        }
        if values.len() != n {
            return Err(io(&format!("expected {n} values, found {}", values.len())));
        }
        phi += DVector::from_vec(values);
    }
    Ok(phi)
}

/// Upper bound on `||Pi||` known to the seeker.
fn pattern_norm_bound(config: &ScenarioConfig) -> f64 {
    let p = &config.disturbance.pattern;
    match &p.fixed {
        Some(fixed) => fixed
            .iter()
            .map(|pat| pat.iter().map(|e| e.magnitude * e.magnitude).sum::<f64>().sqrt())
            .fold(0.0, f64::max),
        None => (p.cells as f64).sqrt() * p.magnitude[0].abs().max(p.magnitude[1].abs()),
    }
}

/// Center cell first, then repeatedly the cell farthest from all chosen ones
/// (ties to the lower index).
pub fn spread_positions(grid: &GridSpec, count: usize) -> Vec<usize> {
    let mut chosen = vec![grid.center()];
    let mut nearest: Vec<i64> = (0..grid.cells()).map(|i| grid.squared_distance(i, chosen[0])).collect();
    while chosen.len() < count {
        let mut best = 0;
        for i in 1..grid.cells() {
            if nearest[i] > nearest[best] {
                best = i;
            }
        }
        chosen.push(best);
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = (*d).min(grid.squared_distance(i, best));
        }
    }
    chosen.truncate(count);
    chosen
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub step: usize,
    pub mean_rcum: f64,
    pub q25: f64,
    pub q75: f64,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Mean and interquartile band of the cumulative regret per step.
pub fn aggregate(trials: &[&TrialResult]) -> Vec<AggregateRow> {
    let steps = trials.iter().map(|t| t.records.len()).min().unwrap_or(0);
    (0..steps)
        .map(|k| {
            let mut values: Vec<f64> = trials.iter().map(|t| t.records[k].cumulative).collect();
            values.sort_by(f64::total_cmp);
            AggregateRow {
                step: k,
                mean_rcum: values.iter().sum::<f64>() / values.len() as f64,
                q25: quantile(&values, 0.25),
                q75: quantile(&values, 0.75),
            }
        })
        .collect()
}

#[derive(Debug)]
pub struct ExperimentResult {
    pub config: ScenarioConfig,
    pub seeds: Vec<u64>,
    pub trials: Vec<Result<TrialResult, ScenarioError>>,
    pub aggregate: Vec<AggregateRow>,
    pub wall_clock: Duration,
}

impl ExperimentResult {
    pub fn successes(&self) -> Vec<&TrialResult> {
        self.trials.iter().filter_map(|t| t.as_ref().ok()).collect()
    }
}

/// Runs all trials (in parallel) and aggregates the successful ones.
pub fn run_experiment(config: &ScenarioConfig) -> Result<ExperimentResult, ScenarioError> {
    let started = Instant::now();
    let scenario = Scenario::build(config.clone())?;
    let seeds: Vec<u64> = (0..config.trials as u64).map(|i| rng::split(config.seed, i)).collect();
    let trials: Vec<_> = seeds.par_iter().map(|&s| scenario.run_trial(s)).collect();
    for (i, t) in trials.iter().enumerate() {
        if let Err(e) = t {
            log::error!("trial {i} failed: {e}");
        }
    }
    let ok: Vec<&TrialResult> = trials.iter().filter_map(|t| t.as_ref().ok()).collect();
    let aggregate = aggregate(&ok);
    Ok(ExperimentResult {
        config: config.clone(),
        seeds,
        trials,
        aggregate,
        wall_clock: started.elapsed(),
    })
}
