//! The ten acceptance criteria, run one after another so each wall-clock
//! limit is measured without competing test threads. Prints one PASS/FAIL
//! line per criterion and fails if any criterion fails.

use std::path::Path;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use source_seek::environment::{verify_assumption1, DynamicsModel, GridSpec, Transition};
use source_seek::filter::{
    filter_step_stable, filter_step_standard, FilterState, StepWeights, WeightMode, WeightSchedule,
};
use source_seek::numerics::{weighted_l1_norm, weighted_l2_norm, weighted_linf_norm};
use source_seek::scenario::{
    builtin, reacquisition_delays, run_experiment, trial_file_name, write_outputs, FilterMode,
    ScenarioConfig, TrialResult,
};
use source_seek::seeker::{top_indices, union_sum};
use source_seek::sensing::{materialize_h, measure, MeasurementBatch, SensorModel};

type Criterion = (usize, &'static str, fn() -> Outcome, Duration);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rel_mat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / b.amax()
}

fn rel_vec(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax() / b.amax()
}

fn random_transition(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::identity(n, n) + DMatrix::from_fn(n, n, |_, _| rng.random_range(-0.08..0.08))
}

fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &b * b.transpose() + DMatrix::identity(n, n) * rng.random_range(0.5..3.0)
}

fn random_batch(n: usize, rng: &mut ChaCha8Rng) -> MeasurementBatch {
    let agents = rng.random_range(1..=3);
    let mut coverage = Vec::new();
    let mut obs = Vec::new();
    let mut vars = Vec::new();
    for _ in 0..agents {
        let size = rng.random_range(1..=n / 2);
        let mut cells = sample(rng, n, size).into_vec();
        cells.sort_unstable();
        obs.push(DVector::from_fn(cells.len(), |_, _| rng.random_range(-1.0..4.0)));
        coverage.push(cells);
        vars.push(rng.random_range(0.5..4.0));
    }
    MeasurementBatch::from_observations(n, coverage, obs, vars)
}

/// Batch form of the weighted filter for one system, by direct inversion.
struct BatchOracle {
    precision0: DMatrix<f64>,
    info0: DVector<f64>,
    info_matrix: DMatrix<f64>,
    info_vector: DVector<f64>,
    product: DMatrix<f64>,
    omega_prev: f64,
}

impl BatchOracle {
    fn new(m0: &DVector<f64>, s0: &DMatrix<f64>) -> Self {
        let n = m0.len();
        let precision0 = s0.clone().try_inverse().unwrap();
        Self {
            info0: &precision0 * m0,
            precision0,
            info_matrix: DMatrix::zeros(n, n),
            info_vector: DVector::zeros(n),
            product: DMatrix::identity(n, n),
            omega_prev: 0.0,
        }
    }

    fn absorb(&mut self, b: &MeasurementBatch, lambda: f64, omega: f64, a_next: &DMatrix<f64>) {
        let y = b.info_matrix();
        self.info_matrix += self.product.transpose() * y * &self.product * lambda;
        self.info_vector += self.product.transpose() * b.info_vector() * lambda;
        self.omega_prev = omega;
        self.product = a_next * &self.product;
    }

    fn estimate(&self) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.info0.len();
        let upsilon =
            &self.precision0 + &self.info_matrix + DMatrix::identity(n, n) * self.omega_prev;
        let inv = upsilon.try_inverse().unwrap();
        let cov = &self.product * &inv * self.product.transpose();
        let mean = &self.product * inv * (&self.info0 + &self.info_vector);
        (mean, cov)
    }
}

fn criterion_1() -> Outcome {
    let (n, steps) = (10, 50);
    let (mut worst_mean, mut worst_cov) = (0.0f64, 0.0f64);
    for system in 0..25u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + system);
        let mats: Vec<_> = (0..steps).map(|_| random_transition(n, &mut rng)).collect();
        let model = DynamicsModel::sequence(mats.clone());
        let report = verify_assumption1(&model, steps, 200);
        assert!(report.empirical_lower > 0.0 && report.empirical_upper.is_finite());
        let m0 = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let s0 = random_spd(n, &mut rng);
        let mut filter = FilterState::standard(m0.clone(), s0.clone()).unwrap();
        let mut oracle = BatchOracle::new(&m0, &s0);
        let mut omega_prev = 0.0;
        for a in &mats {
            let b = random_batch(n, &mut rng);
            let lambda = rng.random_range(0.01..=1.0);
            let omega = if rng.random_bool(0.3) {
                omega_prev
            } else {
                omega_prev + rng.random_range(0.0..0.4)
            };
            let w = StepWeights {
                lambda,
                omega,
                omega_prev,
            };
            filter = filter_step_standard(&filter, &b, &Transition::new(a.clone()), w).unwrap();
            oracle.absorb(&b, lambda, omega, a);
            omega_prev = omega;
            let (m, s) = oracle.estimate();
            worst_mean = worst_mean.max(rel_vec(filter.mean(), &m));
            worst_cov = worst_cov.max(rel_mat(&filter.covariance(), &s));
        }
    }
    outcome(
        worst_mean <= 1e-8 && worst_cov <= 1e-8,
        format!("max rel err mean {worst_mean:.2e}, cov {worst_cov:.2e} (tol 1e-8)"),
    )
}

fn criterion_2() -> Outcome {
    let (n, steps) = (6, 40);
    let mut detail = Vec::new();
    let mut pass = true;
    for (i, gamma) in [0.9, 0.95, 0.99].into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + i as u64);
        let m0 = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let s0 = random_spd(n, &mut rng);
        let schedule = WeightSchedule::new(WeightMode::TypeII { gamma }).unwrap();
        let mut standard = FilterState::standard(m0.clone(), s0.clone()).unwrap();
        let mut stable = FilterState::stable(m0, s0, gamma).unwrap();
        let (mut wm, mut wc) = (0.0f64, 0.0f64);
        for k in 0..steps {
            let a = Transition::new(random_transition(n, &mut rng));
            let b = random_batch(n, &mut rng);
            let w = schedule.weights(k, &b, &standard);
            // Independent check of the weight sequence itself.
            assert!((w.lambda - gamma.powi(-(k as i32))).abs() <= 1e-12 * w.lambda);
            assert_eq!(w.lambda, w.omega);
            standard = filter_step_standard(&standard, &b, &a, w).unwrap();
            stable = filter_step_stable(&stable, &b, &a).unwrap();
            // Sigma_k = gamma^{k-1} Sigma~_k at the post-step index k + 1.
            let rescaled = stable.covariance() * gamma.powi(k as i32);
            wm = wm.max(rel_vec(stable.mean(), standard.mean()));
            wc = wc.max(rel_mat(&rescaled, &standard.covariance()));
        }
        pass &= wm <= 1e-7 && wc <= 1e-7;
        detail.push(format!("gamma {gamma}: mean {wm:.1e} cov {wc:.1e}"));
    }
    outcome(pass, format!("{} (tol 1e-7)", detail.join(", ")))
}

fn small_config(text: &str) -> ScenarioConfig {
    ScenarioConfig::from_toml(text).unwrap()
}

const REDUCTION_TOML: &str = r#"
name = "reduction"
horizon = 300
trials = 1
seed = 31

[grid]
side = 10

[agents]
count = 3
radius = 1.5
noise_variance = [1.0]

[dynamics]
diffusion = 0.005
renormalize = true

[field]
sources = [
    { cell = [2, 2], magnitude = 6.0, spread = 1.0 },
    { cell = [7, 6], magnitude = 4.0, spread = 1.0 },
]

[disturbance]
kind = "type_ii"
schedule = { type = "windows", windows = [[60, 70], [200, 210]] }
pattern = { cells = 1, magnitude = [1.0, 2.0] }

[filter]
mode = "type_ii"
gamma = 1.0

[confidence]
scale = 1e-3
"#;

fn criterion_3() -> Outcome {
    let stable_cfg = small_config(REDUCTION_TOML);
    let mut plain_cfg = stable_cfg.clone();
    plain_cfg.filter.mode = FilterMode::Undiscounted;
    plain_cfg.filter.gamma = None;
    let mut identical = 0;
    let mut compared = 0;
    for seed in [31u64, 32, 33] {
        let mut a = stable_cfg.clone();
        let mut b = plain_cfg.clone();
        a.seed = seed;
        b.seed = seed;
        let ra = run_experiment(&a).unwrap();
        let rb = run_experiment(&b).unwrap();
        let (ta, tb) = (&ra.successes()[0], &rb.successes()[0]);
        compared += 1;
        let same = ta.records.len() == 300
            && ta.records.iter().zip(&tb.records).all(|(x, y)| x.chosen == y.chosen);
        identical += same as usize;
    }
    outcome(
        identical == compared,
        format!("{identical}/{compared} seeds with identical chosen cells over K = 300"),
    )
}

const COVERAGE_TOML: &str = r#"
name = "coverage"
horizon = 50
trials = 200
seed = 41

[grid]
side = 6

[agents]
count = 3
radius = 1.0
noise_variance = [1.0]

[dynamics]
diffusion = 0.02

[field]
sources = [
    { cell = [1, 1], magnitude = 5.0, spread = 1.0 },
    { cell = [4, 3], magnitude = 3.0, spread = 0.8 },
]

[disturbance]
kind = "type_i"
schedule = { type = "none" }
budget = { type = "zero" }

[filter]
mode = "type_i"

[confidence]
delta = 0.1
scale = 1.0
"#;

fn criterion_4() -> Outcome {
    let cfg = small_config(COVERAGE_TOML);
    let result = run_experiment(&cfg).unwrap();
    let trials = result.successes();
    let covered = trials.iter().filter(|t| t.always_covered()).count();
    let frac = covered as f64 / cfg.trials as f64;
    outcome(
        trials.len() == cfg.trials && frac >= 0.90,
        format!("{covered}/{} trials covered at every step ({frac:.3}, need >= 0.90)", cfg.trials),
    )
}

fn mean_regret(trials: &[&TrialResult], range: std::ops::Range<usize>) -> f64 {
    let len = range.len() as f64;
    trials
        .iter()
        .map(|t| t.records[range.clone()].iter().map(|r| r.regret).sum::<f64>() / len)
        .sum::<f64>()
        / trials.len() as f64
}

fn criterion_5() -> Outcome {
    let cfg = builtin("desk-typeI-slow").unwrap();
    assert_eq!((cfg.grid.side, cfg.agents.count, cfg.horizon, cfg.trials), (20, 3, 800, 20));
    let result = run_experiment(&cfg).unwrap();
    let trials = result.successes();
    let first = mean_regret(&trials, 0..400);
    let second = mean_regret(&trials, 400..800);
    outcome(
        trials.len() == 20 && second < 0.5 * first,
        format!(
            "mean r over first half {first:.4}, second half {second:.4} (ratio {:.4}, need < 0.5)",
            second / first
        ),
    )
}

/// Mean post-injection delay over all windows of all trials; a censored
/// window counts as its full length.
fn mean_delay(trials: &[&TrialResult]) -> (f64, usize) {
    let mut total = 0.0;
    let mut count = 0;
    let mut censored = 0;
    for t in trials {
        let horizon = t.records.len();
        for (w, d) in reacquisition_delays(t).into_iter().enumerate() {
            let start = t.injections[w].start;
            let stop = t.injections.get(w + 1).map_or(horizon, |n| n.start).min(horizon);
            total += match d {
                Some(d) => d as f64,
                None => {
                    censored += 1;
                    (stop - start) as f64
                }
            };
            count += 1;
        }
    }
    (total / count as f64, censored)
}

fn criterion_6() -> Outcome {
    let discounted = builtin("desk-typeII-abrupt").unwrap();
    assert_eq!(discounted.filter.gamma, Some(0.99));
    let mut plain = discounted.clone();
    plain.filter.mode = FilterMode::Undiscounted;
    plain.filter.gamma = None;
    let mut fast = discounted.clone();
    fast.filter.gamma = Some(0.95);

    let r99 = run_experiment(&discounted).unwrap();
    let r1 = run_experiment(&plain).unwrap();
    let r95 = run_experiment(&fast).unwrap();
    let final_mean = |r: &source_seek::scenario::ExperimentResult| r.aggregate.last().unwrap().mean_rcum;
    let (c99, c1) = (final_mean(&r99), final_mean(&r1));
    let (d99, cens99) = mean_delay(&r99.successes());
    let (d95, cens95) = mean_delay(&r95.successes());
    let all_ok = [&r99, &r1, &r95].iter().all(|r| r.successes().len() == 20);
    outcome(
        all_ok && c99 < c1 && d95 < d99,
        format!(
            "R_cum(K): gamma 0.99 {c99:.1} vs undiscounted {c1:.1}; mean reacquisition delay \
             gamma 0.95 {d95:.1} ({cens95} censored) vs 0.99 {d99:.1} ({cens99} censored)"
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7000);
    let mut worst = f64::INFINITY;
    for _ in 0..10_000 {
        let n = rng.random_range(1..=50);
        let m = random_spd(n, &mut rng);
        let x = DVector::from_fn(n, |_, _| rng.random_range(-10.0..10.0));
        let d = m.diagonal();
        let d2 = d.map(|v| v * v);
        let rootn = (n as f64).sqrt();
        let l2_sq = weighted_l2_norm(&x, &d2).unwrap();
        let m_norm = x.dot(&(&m * &x)).max(0.0).sqrt();
        let slacks = [
            l2_sq - weighted_linf_norm(&x, &d).unwrap(),
            rootn * l2_sq - weighted_l1_norm(&x, &d).unwrap(),
            rootn * weighted_l2_norm(&x, &d).unwrap() - m_norm,
        ];
        worst = slacks.into_iter().fold(worst, f64::min);
    }
    outcome(worst >= -1e-10, format!("min slack {worst:.3e} over 10000 pairs (need >= -1e-10)"))
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8000);
    let mut mismatches = 0;
    for _ in 0..500 {
        let mu = DVector::from_fn(8, |_, _| rng.random_range(0.0..10.0));
        let mut best = f64::MIN;
        for p in 0..8 {
            for q in 0..8 {
                for r in 0..8 {
                    let mut cells = vec![p, q, r];
                    cells.sort_unstable();
                    cells.dedup();
                    best = best.max(cells.iter().map(|&c| mu[c]).sum());
                }
            }
        }
        let got = union_sum(&mu, &top_indices(&mu, 3).unwrap());
        if (got - best).abs() > 1e-12 * best.abs().max(1.0) {
            mismatches += 1;
        }
    }
    outcome(mismatches == 0, format!("{mismatches} mismatches in 500 draws"))
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9000);
    let mut mismatches = 0;
    for trial in 0..500u64 {
        let side = rng.random_range(3..=12);
        let grid = GridSpec::new(side);
        let agents = rng.random_range(1..=4);
        let radius = rng.random_range(0.0..3.0);
        let vars: Vec<f64> = (0..agents).map(|_| rng.random_range(0.2..5.0)).collect();
        let sensors = SensorModel::new(radius, vars.clone()).unwrap();
        let positions: Vec<usize> = (0..agents).map(|_| rng.random_range(0..grid.cells())).collect();
        let state = DVector::from_fn(grid.cells(), |_, _| rng.random_range(0.0..5.0));
        let batch = measure(&grid, &state, &positions, &sensors, trial, 0).unwrap();
        let h = materialize_h(&batch, &grid);
        let v_inv = DMatrix::from_diagonal(&batch.noise_precision());
        let dense = h.transpose() * v_inv * &h;
        if dense != DMatrix::from_diagonal(batch.info_diag()) {
            mismatches += 1;
        }
    }
    outcome(mismatches == 0, format!("{mismatches} mismatches in 500 placements"))
}

fn csv_bytes(dir: &Path, trials: usize) -> Vec<Vec<u8>> {
    let mut files: Vec<_> = (0..trials).map(trial_file_name).collect();
    files.push("aggregate.csv".to_string());
    files.iter().map(|f| std::fs::read(dir.join(f)).unwrap()).collect()
}

fn run_in_pool(cfg: &ScenarioConfig, threads: usize, dir: &Path) -> Vec<Vec<u8>> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    let result = pool.install(|| run_experiment(cfg)).unwrap();
    write_outputs(&result, dir).unwrap();
    csv_bytes(dir, cfg.trials)
}

fn criterion_10() -> Outcome {
    let mut abrupt = builtin("desk-typeII-abrupt").unwrap();
    abrupt.trials = 6;
    let mut slow = builtin("desk-typeI-slow").unwrap();
    slow.trials = 3;
    slow.horizon = 120;
    let mut pass = true;
    let mut detail = Vec::new();
    for cfg in [abrupt, slow] {
        let tmp = tempfile::tempdir().unwrap();
        let first = run_in_pool(&cfg, 1, &tmp.path().join("a"));
        let second = run_in_pool(&cfg, 1, &tmp.path().join("b"));
        let parallel = run_in_pool(&cfg, 4, &tmp.path().join("c"));
        let same = first == second && first == parallel;
        pass &= same;
        detail.push(format!("{}: {}", cfg.name, if same { "identical" } else { "DIFFERENT" }));
    }
    outcome(pass, format!("{} (sequential x2, 4 threads)", detail.join(", ")))
}

#[test]
fn acceptance_criteria() {
    let criteria: [Criterion; 10] = [
        (1, "closed-form oracle equivalence", criterion_1, Duration::from_secs(30)),
        (2, "stable-form equivalence", criterion_2, Duration::from_secs(10)),
        (3, "gamma = 1 reduction", criterion_3, Duration::from_secs(20)),
        (4, "confidence coverage", criterion_4, Duration::from_secs(180)),
        (5, "sub-linear regret, Type I", criterion_5, Duration::from_secs(300)),
        (6, "disturbance adaptation, Type II", criterion_6, Duration::from_secs(600)),
        (7, "norm inequalities", criterion_7, Duration::from_secs(10)),
        (8, "selection optimality", criterion_8, Duration::from_secs(5)),
        (9, "information matrix diagonality", criterion_9, Duration::from_secs(5)),
        (10, "determinism", criterion_10, Duration::from_secs(120)),
    ];
    let mut failed = Vec::new();
    for (id, name, run, limit) in criteria {
        let started = Instant::now();
        let result = run();
        let elapsed = started.elapsed();
        let in_time = elapsed < limit;
        let pass = result.pass && in_time;
        println!(
            "{} criterion {id} ({name}): {}; {:.1}s of {}s{}",
            if pass { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64(),
            limit.as_secs(),
            if in_time { "" } else { " (over time limit)" },
        );
        if !pass {
            failed.push(id);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
