//! TOML scenario schema. Unknown keys are rejected at every level.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::ScenarioError;
use crate::environment::DisturbanceKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    /// Number of steps `K`.
    pub horizon: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Master seed; trial `i` uses `rng::split(seed, i)`.
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub grid: GridConfig,
    pub agents: AgentsConfig,
    #[serde(default)]
    pub dynamics: DynamicsConfig,
    pub field: FieldConfig,
    #[serde(default)]
    pub disturbance: DisturbanceConfig,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default)]
    pub confidence: ConfidenceConfig,
}

fn default_trials() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Side length `D`; the grid has `D * D` cells.
    pub side: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentsConfig {
    pub count: usize,
    /// Sensing radius in cells.
    pub radius: f64,
    /// One variance per agent, or a single value shared by all.
    pub noise_variance: Vec<f64>,
    /// `[row, col]` per agent; default is a farthest-point spread from the center.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_positions: Option<Vec<[usize; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsConfig {
    #[serde(default)]
    pub diffusion: f64,
    #[serde(default)]
    pub velocity: [f64; 2],
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub renormalize: bool,
    #[serde(default = "default_singular_floor")]
    pub singular_floor: f64,
    /// Declared `[alpha_lower, alpha_upper]`; measured when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_bounds: Option<[f64; 2]>,
    #[serde(default = "default_assumption_samples")]
    pub assumption_samples: usize,
}

fn default_dt() -> f64 {
    1.0
}

fn default_singular_floor() -> f64 {
    1e-3
}

fn default_assumption_samples() -> usize {
    200
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self {
            diffusion: 0.0,
            velocity: [0.0, 0.0],
            dt: default_dt(),
            renormalize: false,
            singular_floor: default_singular_floor(),
            alpha_bounds: None,
            assumption_samples: default_assumption_samples(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub cell: [usize; 2],
    pub magnitude: f64,
    /// Gaussian spread in cells; 0 puts all mass on `cell`.
    #[serde(default)]
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    #[serde(default)]
    pub background: f64,
    #[serde(default)]
    pub sources: Vec<SourceConfig>,
    /// CSV with `D` rows of `D` values, added on top of the sources.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleConfig {
    // Empty braces so that stray keys next to `type` are rejected.
    None {},
    /// `delta_k = Pi / k^2` for `k >= start`.
    Slow { start: usize },
    /// `delta_k = Pi_w` on each inclusive window `[start, end]`.
    Windows { windows: Vec<[usize; 2]> },
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig::None {}
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternEntry {
    pub cell: [usize; 2],
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternConfig {
    /// Cells per random pattern.
    #[serde(default = "default_pattern_cells")]
    pub cells: usize,
    /// Range of per-cell magnitudes for random patterns.
    #[serde(default = "default_pattern_magnitude")]
    pub magnitude: [f64; 2],
    /// Explicit patterns, one per window (or one for the slow schedule).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed: Option<Vec<Vec<PatternEntry>>>,
}

fn default_pattern_cells() -> usize {
    2
}

fn default_pattern_magnitude() -> [f64; 2] {
    [1.0, 1.0]
}

impl Default for PatternConfig {
    fn default() -> Self {
        Self {
            cells: default_pattern_cells(),
            magnitude: default_pattern_magnitude(),
            fixed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum BudgetConfig {
    /// Analytic envelope of the schedule with the pattern-norm bound.
    Envelope {},
    Constant { value: f64 },
    Zero {},
}

impl Default for BudgetConfig {
    fn default() -> Self {
        BudgetConfig::Envelope {}
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceConfig {
    #[serde(default = "default_kind")]
    pub kind: DisturbanceKind,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub pattern: PatternConfig,
    #[serde(default)]
    pub budget: BudgetConfig,
    /// Bound on `||phi~_k||`; enforced by the environment when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_bound: Option<f64>,
}

fn default_kind() -> DisturbanceKind {
    DisturbanceKind::TypeI
}

impl Default for DisturbanceConfig {
    fn default() -> Self {
        Self {
            kind: default_kind(),
            schedule: ScheduleConfig::None {},
            pattern: PatternConfig::default(),
            budget: BudgetConfig::Envelope {},
            state_bound: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterMode {
    #[serde(rename = "type_i")]
    TypeI,
    #[serde(rename = "type_ii")]
    TypeII,
    Undiscounted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    pub mode: FilterMode,
    /// Type I cap; defaults to `sqrt(N) / B_K` from the budget model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_bar: Option<f64>,
    /// Type II discount in `(0, 1]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default = "default_prior_mean")]
    pub prior_mean: f64,
    #[serde(default = "default_prior_variance")]
    pub prior_variance: f64,
}

fn default_prior_mean() -> f64 {
    0.1
}

fn default_prior_variance() -> f64 {
    25.0
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            mode: FilterMode::TypeI,
            lambda_bar: None,
            gamma: None,
            prior_mean: default_prior_mean(),
            prior_variance: default_prior_variance(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfidenceConfig {
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Calibration multiplier `c_beta`.
    #[serde(default = "default_scale")]
    pub scale: f64,
    /// Bound on `||phi^_0 - phi_0||`; defaults to `||phi^_0|| + ||phi_0||`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_error_bound: Option<f64>,
}

fn default_delta() -> f64 {
    0.1
}

fn default_scale() -> f64 {
    1.0
}

impl Default for ConfidenceConfig {
    fn default() -> Self {
        Self {
            delta: default_delta(),
            scale: default_scale(),
            prior_error_bound: None,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String, ScenarioError> {
        Ok(toml::to_string(self)?)
    }

    /// Noise variance of every agent, expanding a single shared value.
    pub fn noise_variances(&self) -> Vec<f64> {
        match self.agents.noise_variance.as_slice() {
            [v] => vec![*v; self.agents.count],
            vs => vs.to_vec(),
        }
    }

    /// Discount used by the stable filter and the Type II radius.
    pub fn effective_gamma(&self) -> f64 {
        match self.filter.mode {
            FilterMode::TypeII => self.filter.gamma.unwrap_or(1.0),
            _ => 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |msg: String| Err(ScenarioError::Config(msg));
        let side = self.grid.side;
        let n = side * side;
        if side == 0 {
            return bad("grid.side must be positive".into());
        }
        if self.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        let agents = &self.agents;
        if agents.count == 0 || agents.count > n {
            return bad(format!("agents.count must lie in 1..={n}"));
        }
        if !(agents.radius >= 0.0 && agents.radius.is_finite()) {
            return bad("agents.radius must be non-negative".into());
        }
        let vars = &agents.noise_variance;
        if !(vars.len() == 1 || vars.len() == agents.count) {
            return bad("agents.noise_variance needs one value or one per agent".into());
        }
        if vars.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return bad("noise variances must be positive".into());
        }
        let in_grid = |c: &[usize; 2]| c[0] < side && c[1] < side;
        if let Some(ps) = &agents.initial_positions {
            if ps.len() != agents.count || !ps.iter().all(in_grid) {
                return bad("initial_positions must list one in-grid cell per agent".into());
            }
            let mut cells: Vec<_> = ps.iter().map(|c| c[0] * side + c[1]).collect();
            cells.sort_unstable();
            cells.dedup();
            if cells.len() != ps.len() {
                return bad("initial_positions must be distinct".into());
            }
        }
        let d = &self.dynamics;
        if !(d.diffusion >= 0.0 && d.dt > 0.0 && d.singular_floor > 0.0) {
            return bad("dynamics: diffusion >= 0, dt > 0 and singular_floor > 0 required".into());
        }
        if d.assumption_samples == 0 {
            return bad("dynamics.assumption_samples must be at least 1".into());
        }
        if let Some([lo, hi]) = d.alpha_bounds {
            if !(lo > 0.0 && lo <= hi) {
                return bad("dynamics.alpha_bounds must satisfy 0 < lower <= upper".into());
            }
        }
        for s in &self.field.sources {
            if !in_grid(&s.cell) || !(s.spread >= 0.0) {
                return bad(format!("field source {:?} invalid", s.cell));
            }
        }
        let dist = &self.disturbance;
        match &dist.schedule {
            ScheduleConfig::Windows { windows } => {
                if windows.iter().any(|[s, e]| s > e) {
                    return bad("disturbance windows need start <= end".into());
                }
            }
            ScheduleConfig::Slow { .. } | ScheduleConfig::None {} => {}
        }
        let [lo, hi] = dist.pattern.magnitude;
        if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
            return bad("disturbance.pattern.magnitude must be an ordered pair".into());
        }
        if dist.pattern.cells == 0 || dist.pattern.cells > n {
            return bad(format!("disturbance.pattern.cells must lie in 1..={n}"));
        }
        if let Some(fixed) = &dist.pattern.fixed {
            let needed = match &dist.schedule {
                ScheduleConfig::None {} => 0,
                ScheduleConfig::Slow { .. } => 1,
                ScheduleConfig::Windows { windows } => windows.len(),
            };
            if fixed.len() != needed {
                return bad(format!("disturbance.pattern.fixed needs {needed} patterns"));
            }
            if !fixed.iter().flatten().all(|e| in_grid(&e.cell)) {
                return bad("fixed pattern cell outside the grid".into());
            }
        }
        if let BudgetConfig::Constant { value } = dist.budget {
            if !(value >= 0.0) {
                return bad("budget value must be non-negative".into());
            }
        }
        if let Some(b) = dist.state_bound {
            if !(b > 0.0) {
                return bad("state_bound must be positive".into());
            }
        }
        let f = &self.filter;
        if !(f.prior_variance > 0.0) {
            return bad("filter.prior_variance must be positive".into());
        }
        match f.mode {
            FilterMode::TypeII => match f.gamma {
                Some(g) if g > 0.0 && g <= 1.0 => {}
                _ => return bad("filter.gamma in (0, 1] is required for type_ii".into()),
            },
            FilterMode::TypeI => {
                if let Some(l) = f.lambda_bar {
                    if !(l > 0.0) {
                        return bad("filter.lambda_bar must be positive".into());
                    }
                }
            }
            FilterMode::Undiscounted => {}
        }
        let c = &self.confidence;
        if !(c.delta > 0.0 && c.delta < 1.0) {
            return bad("confidence.delta must lie in (0, 1)".into());
        }
        if !(c.scale > 0.0) {
            return bad("confidence.scale must be positive".into());
        }
        if let Some(b) = c.prior_error_bound {
            if !(b >= 0.0) {
                return bad("confidence.prior_error_bound must be non-negative".into());
            }
        }
        Ok(())
    }
}
