use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{EnvironmentError, GridSpec};
use crate::numerics::symmetrize;

/// Density above which a transition matrix is not worth keeping in sparse form.
const SPARSE_DENSITY_LIMIT: f64 = 0.25;

/// Compressed-row copy of a transition matrix.
#[derive(Debug, Clone, PartialEq)]
struct CsrMatrix {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut row_ptr = Vec::with_capacity(m.nrows() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let v = m[(i, j)];
                if v != 0.0 {
                    cols.push(j);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Self { row_ptr, cols, vals }
    }

    fn mul_slice(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[p] * x[self.cols[p]];
            }
            *o = s;
        }
    }
}

/// One transition matrix `A_k`, with a sparse copy when it pays off.
#[derive(Debug, Clone)]
pub struct Transition {
    dense: DMatrix<f64>,
    sparse: Option<CsrMatrix>,
    identity: bool,
}

impl Transition {
    pub fn new(dense: DMatrix<f64>) -> Self {
        assert_eq!(dense.nrows(), dense.ncols(), "transition must be square");
        let n = dense.nrows();
        let identity = dense == DMatrix::<f64>::identity(n, n);
        let nnz = dense.iter().filter(|v| **v != 0.0).count();
        let sparse = if !identity && (nnz as f64) <= SPARSE_DENSITY_LIMIT * (n * n) as f64 {
            Some(CsrMatrix::from_dense(&dense))
        } else {
            None
        };
        Self {
            dense,
            sparse,
            identity,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::new(DMatrix::identity(n, n))
    }

    pub fn dim(&self) -> usize {
        self.dense.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.dense
    }

    pub fn is_identity(&self) -> bool {
        self.identity
    }

    /// `A x`.
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        if self.identity {
            return x.clone();
        }
        match &self.sparse {
            Some(csr) => {
                let mut out = DVector::zeros(x.len());
                csr.mul_slice(x.as_slice(), out.as_mut_slice());
                out
            }
            None => &self.dense * x,
        }
    }

    /// `A X`.
    pub fn left_mul(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        if self.identity {
            return x.clone();
        }
        match &self.sparse {
            Some(csr) => {
                let n = x.nrows();
                let mut out = DMatrix::zeros(n, x.ncols());
                for (src, dst) in x
                    .as_slice()
                    .chunks_exact(n)
                    .zip(out.as_mut_slice().chunks_exact_mut(n))
                {
                    csr.mul_slice(src, dst);
                }
                out
            }
            None => &self.dense * x,
        }
    }

    /// `A X A^T` for symmetric `X`; the result is symmetrized.
    pub fn congruence(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        if self.identity {
            return x.clone();
        }
        // A X A^T = A (A X)^T when X is symmetric.
        let ax = self.left_mul(x);
        let mut out = self.left_mul(&ax.transpose());
        symmetrize(&mut out);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlphaBounds {
    pub lower: f64,
    pub upper: f64,
}

impl AlphaBounds {
    pub fn new(lower: f64, upper: f64) -> Result<Self, EnvironmentError> {
        if !(lower > 0.0 && lower <= upper && upper.is_finite()) {
            return Err(EnvironmentError::InvalidBounds { lower, upper });
        }
        Ok(Self { lower, upper })
    }
}

#[derive(Debug, Clone)]
pub enum TransitionSchedule {
    /// The same `A` at every step.
    Invariant(Transition),
    /// `A_1, A_2, ...`; element `k - 1` holds `A_k`.
    Sequence(Vec<Transition>),
}

/// Nominal linear time-varying dynamics `phi_{k+1} = A_{k+1} phi_k`.
#[derive(Debug, Clone)]
pub struct DynamicsModel {
    schedule: TransitionSchedule,
    bounds: Option<AlphaBounds>,
}

impl DynamicsModel {
    pub fn invariant(a: DMatrix<f64>) -> Self {
        Self {
            schedule: TransitionSchedule::Invariant(Transition::new(a)),
            bounds: None,
        }
    }

    pub fn sequence(matrices: Vec<DMatrix<f64>>) -> Self {
        assert!(!matrices.is_empty(), "transition sequence must be non-empty");
        let n = matrices[0].nrows();
        assert!(matrices.iter().all(|m| m.nrows() == n && m.ncols() == n));
        Self {
            schedule: TransitionSchedule::Sequence(matrices.into_iter().map(Transition::new).collect()),
            bounds: None,
        }
    }

    pub fn with_bounds(mut self, bounds: AlphaBounds) -> Self {
        self.bounds = Some(bounds);
        self
    }

    pub fn bounds(&self) -> Option<AlphaBounds> {
        self.bounds
    }

    pub fn dim(&self) -> usize {
        match &self.schedule {
            TransitionSchedule::Invariant(t) => t.dim(),
            TransitionSchedule::Sequence(ts) => ts[0].dim(),
        }
    }

    pub fn is_time_invariant(&self) -> bool {
        matches!(self.schedule, TransitionSchedule::Invariant(_))
    }

    /// `A_k` for `k >= 1`.
    pub fn transition(&self, k: usize) -> Result<&Transition, EnvironmentError> {
        if k == 0 {
            return Err(EnvironmentError::StepOutOfRange { step: k });
        }
        match &self.schedule {
            TransitionSchedule::Invariant(t) => Ok(t),
            TransitionSchedule::Sequence(ts) => {
                ts.get(k - 1).ok_or(EnvironmentError::StepOutOfRange { step: k })
            }
        }
    }
}

/// `A[k:t] = A_k A_{k-1} ... A_t`, identity when `k < t`.
pub fn state_propagation_matrix(
    model: &DynamicsModel,
    k: usize,
    t: usize,
) -> Result<DMatrix<f64>, EnvironmentError> {
    let n = model.dim();
    let mut out = DMatrix::identity(n, n);
    if k < t {
        return Ok(out);
    }
    if t == 0 {
        return Err(EnvironmentError::StepOutOfRange { step: 0 });
    }
    for step in t..=k {
        out = model.transition(step)?.left_mul(&out);
    }
    Ok(out)
}

/// Incrementally maintained `A[k:1]`.
#[derive(Debug, Clone)]
pub struct PropagationCache {
    step: usize,
    product: DMatrix<f64>,
}

impl PropagationCache {
    pub fn new(n: usize) -> Self {
        Self {
            step: 0,
            product: DMatrix::identity(n, n),
        }
    }

    /// Current `k`, so that [`Self::product`] is `A[k:1]`.
    pub fn step(&self) -> usize {
        self.step
    }

    pub fn product(&self) -> &DMatrix<f64> {
        &self.product
    }

    /// Moves from `A[k:1]` to `A[k+1:1] = A_{k+1} A[k:1]`.
    pub fn advance(&mut self, model: &DynamicsModel) -> Result<&DMatrix<f64>, EnvironmentError> {
        let next = model.transition(self.step + 1)?;
        self.product = next.left_mul(&self.product);
        self.step += 1;
        Ok(&self.product)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assumption1Report {
    /// Smallest eigenvalue of `A[k:t]^T A[k:t]` over the sampled pairs.
    pub empirical_lower: f64,
    /// Largest eigenvalue over the sampled pairs.
    pub empirical_upper: f64,
    pub pairs_checked: usize,
    /// `None` when the model carries no configured bounds.
    pub within_configured: Option<bool>,
}

impl Assumption1Report {
    pub fn empirical_bounds(&self) -> Result<AlphaBounds, EnvironmentError> {
        AlphaBounds::new(self.empirical_lower, self.empirical_upper)
    }

    /// Whether `bounds` cover the sampled range (up to round-off).
    pub fn covered_by(&self, bounds: AlphaBounds) -> bool {
        self.empirical_lower >= bounds.lower * (1.0 - 1e-12)
            && self.empirical_upper <= bounds.upper * (1.0 + 1e-12)
    }
}

/// Samples `(k, t)` pairs with `1 <= t <= k <= horizon` and reports the
/// extreme eigenvalues of `A[k:t]^T A[k:t]`.
pub fn verify_assumption1(model: &DynamicsModel, horizon: usize, samples: usize) -> Assumption1Report {
    let n = model.dim();
    let horizon = horizon.max(1);
    let total_pairs = horizon * (horizon + 1) / 2;
    let mut pairs: Vec<(usize, usize)> = if total_pairs <= samples {
        (1..=horizon).flat_map(|k| (1..=k).map(move |t| (k, t))).collect()
    } else {
        // The longest and shortest spans are always included.
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_a551);
        let mut pairs = vec![(horizon, 1), (1, 1)];
        pairs.extend((2..samples.max(2)).map(|_| {
            let k = rng.random_range(1..=horizon);
            let t = rng.random_range(1..=k);
            (k, t)
        }));
        pairs
    };

    let mut lower = f64::INFINITY;
    let mut upper = 0.0f64;
    let mut record = |p: &DMatrix<f64>| {
        let gram = p.tr_mul(p);
        let eig = gram.symmetric_eigenvalues();
        lower = lower.min(eig.min());
        upper = upper.max(eig.max());
    };

    match &model.schedule {
        TransitionSchedule::Invariant(a) if a.is_identity() => {
            lower = 1.0;
            upper = 1.0;
        }
        TransitionSchedule::Invariant(a) => {
            // A[k:t] = A^(k-t+1): only the span matters.
            let mut spans: Vec<usize> = pairs.iter().map(|(k, t)| k - t + 1).collect();
            spans.sort_unstable();
            spans.dedup();
            let mut power = DMatrix::identity(n, n);
            let mut reached = 0;
            for span in spans {
                while reached < span {
                    power = a.left_mul(&power);
                    reached += 1;
                }
                record(&power);
            }
        }
        TransitionSchedule::Sequence(_) => {
            pairs.sort_unstable();
            pairs.dedup();
            for &(k, t) in &pairs {
                match state_propagation_matrix(model, k, t) {
                    Ok(p) => record(&p),
                    Err(_) => continue,
                }
            }
        }
    }

    let mut report = Assumption1Report {
        empirical_lower: lower,
        empirical_upper: upper,
        pairs_checked: pairs.len(),
        within_configured: None,
    };
    report.within_configured = model.bounds.map(|b| report.covered_by(b));
    report
}

/// Parameters of the explicit upwind convection-diffusion stencil.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvectionDiffusion {
    pub diffusion: f64,
    /// `(v_x, v_y)`: `v_x` moves mass along columns, `v_y` along rows.
    pub velocity: [f64; 2],
    pub dt: f64,
    pub renormalize: bool,
    /// Smallest singular value allowed after renormalization.
    pub singular_floor: f64,
}

impl Default for ConvectionDiffusion {
    fn default() -> Self {
        Self {
            diffusion: 0.0,
            velocity: [0.0, 0.0],
            dt: 1.0,
            renormalize: false,
            singular_floor: 1e-3,
        }
    }
}

/// Raw (mass-conserving) stencil matrix: column sums are exactly one.
pub fn convection_diffusion_stencil(
    grid: &GridSpec,
    params: &ConvectionDiffusion,
) -> Result<DMatrix<f64>, EnvironmentError> {
    let ConvectionDiffusion {
        diffusion,
        velocity: [vx, vy],
        dt,
        ..
    } = *params;
    if !(diffusion >= 0.0 && dt > 0.0 && vx.is_finite() && vy.is_finite()) {
        return Err(EnvironmentError::InvalidParameter(format!(
            "diffusion={diffusion}, dt={dt}, velocity=({vx}, {vy})"
        )));
    }
    let courant = dt * (4.0 * diffusion + vx.abs() + vy.abs());
    if courant >= 1.0 {
        return Err(EnvironmentError::UnstableScheme { courant });
    }

    let side = grid.side();
    let n = grid.cells();
    let mut a = DMatrix::<f64>::zeros(n, n);
    let d = dt * diffusion;
    for src in 0..n {
        let (r, c) = grid.coords(src);
        let mut outflow = 0.0;
        let mut send = |dst: Option<(usize, usize)>, w: f64, a: &mut DMatrix<f64>| {
            if w == 0.0 {
                return;
            }
            // Zero-flux boundary: nothing leaves through the edge.
            if let Some((rr, cc)) = dst {
                a[(grid.index(rr, cc), src)] += w;
                outflow += w;
            }
        };
        let up = (r > 0).then(|| (r - 1, c));
        let down = (r + 1 < side).then(|| (r + 1, c));
        let left = (c > 0).then(|| (r, c - 1));
        let right = (c + 1 < side).then(|| (r, c + 1));
        for nb in [up, down, left, right] {
            send(nb, d, &mut a);
        }
        if vx > 0.0 {
            send(right, dt * vx, &mut a);
        } else if vx < 0.0 {
            send(left, -dt * vx, &mut a);
        }
        if vy > 0.0 {
            send(down, dt * vy, &mut a);
        } else if vy < 0.0 {
            send(up, -dt * vy, &mut a);
        }
        a[(src, src)] += 1.0 - outflow;
    }
    Ok(a)
}

/// First-order upwind, zero-flux, explicit-Euler transition matrix.
pub fn build_convection_diffusion(
    grid: &GridSpec,
    params: &ConvectionDiffusion,
) -> Result<DynamicsModel, EnvironmentError> {
    let mut a = convection_diffusion_stencil(grid, params)?;
    let sv = a.clone().singular_values();
    let (mut smin, smax) = (sv.min(), sv.max());
    if params.renormalize && smax > 1.0 {
        a /= smax;
        smin /= smax;
        if smin < params.singular_floor {
            return Err(EnvironmentError::Singular { smallest: smin });
        }
    }
    if smin < 1e-10 {
        return Err(EnvironmentError::Singular { smallest: smin });
    }
    // Bounds on A[k:t] depend on the horizon; callers attach them after
    // running `verify_assumption1`.
    Ok(DynamicsModel::invariant(a))
}
