//! Dense linear-algebra helpers and the diagonal-weighted vector norms.
//!
//! The three weighted norms take the diagonal of a positive-definite matrix
//! as a plain vector of weights `d`:
//!
//! * `weighted_l2_norm`:   `sqrt(sum_i d_i * x_i^2)`
//! * `weighted_linf_norm`: `max_i d_i * |x_i|`
//! * `weighted_l1_norm`:   `sum_i d_i * |x_i|`

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Relative singularity floor for [`spd_inverse`]: pivots must exceed this
/// times the largest diagonal entry.
pub const SPD_RELATIVE_FLOOR: f64 = 1e-12;

/// Absolute tolerance on `|m_ij - m_ji|` (scaled by `max(1, max|m|)`).
pub const SYMMETRY_TOLERANCE: f64 = 1e-9;

/// Block size below which [`spd_inverse`] falls back to a plain Cholesky.
const LEAF_SIZE: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("weight {index} is not strictly positive ({value})")]
    NonPositiveWeight { index: usize, value: f64 },
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("covariance singular: pivot {pivot:e} below floor {floor:e}")]
    Singular { pivot: f64, floor: f64 },
}

fn check_weights(x: &DVector<f64>, d: &DVector<f64>) -> Result<(), NumericsError> {
    if x.len() != d.len() {
        return Err(NumericsError::DimensionMismatch {
            expected: d.len(),
            actual: x.len(),
        });
    }
    for (index, &value) in d.iter().enumerate() {
        if !(value > 0.0) {
            return Err(NumericsError::NonPositiveWeight { index, value });
        }
    }
    Ok(())
}

pub fn weighted_l2_norm(x: &DVector<f64>, d: &DVector<f64>) -> Result<f64, NumericsError> {
    check_weights(x, d)?;
    Ok(x.iter().zip(d.iter()).map(|(xi, di)| di * xi * xi).sum::<f64>().sqrt())
}

pub fn weighted_linf_norm(x: &DVector<f64>, d: &DVector<f64>) -> Result<f64, NumericsError> {
    check_weights(x, d)?;
    Ok(x.iter()
        .zip(d.iter())
        .map(|(xi, di)| di * xi.abs())
        .fold(0.0, f64::max))
}

pub fn weighted_l1_norm(x: &DVector<f64>, d: &DVector<f64>) -> Result<f64, NumericsError> {
    check_weights(x, d)?;
    Ok(x.iter().zip(d.iter()).map(|(xi, di)| di * xi.abs()).sum())
}

/// Largest `|m_ij - m_ji|` over the matrix.
pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<(), NumericsError> {
    if m.nrows() != m.ncols() {
        return Err(NumericsError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    let scale = m.amax().max(1.0);
    let asymmetry = max_asymmetry(m);
    if asymmetry > SYMMETRY_TOLERANCE * scale {
        return Err(NumericsError::NotSymmetric { asymmetry });
    }
    Ok(())
}

/// `sqrt(x^T M x)`, clamped at zero against round-off.
pub fn mahalanobis_norm(x: &DVector<f64>, m: &DMatrix<f64>) -> Result<f64, NumericsError> {
    check_symmetric(m)?;
    if x.len() != m.nrows() {
        return Err(NumericsError::DimensionMismatch {
            expected: m.nrows(),
            actual: x.len(),
        });
    }
    Ok(x.dot(&(m * x)).max(0.0).sqrt())
}

/// Replaces `m` with `(m + m^T) / 2` in place.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Inverse of a symmetric positive-definite matrix.
///
/// Uses a recursive block LDL^T (Schur complement) factorization with dense
/// Cholesky leaves, so almost all of the work lands in matrix products. Every
/// pivot is checked against `SPD_RELATIVE_FLOOR * max_i m_ii`; the result is
/// symmetrized before returning.
pub fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>, NumericsError> {
    check_symmetric(m)?;
    let n = m.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let max_diag = m.diagonal().max();
    if !(max_diag > 0.0) {
        return Err(NumericsError::Singular {
            pivot: max_diag,
            floor: 0.0,
        });
    }
    let floor = SPD_RELATIVE_FLOOR * max_diag;
    let mut inv = block_inverse(m, floor)?;
    symmetrize(&mut inv);
    Ok(inv)
}

fn block_inverse(m: &DMatrix<f64>, floor: f64) -> Result<DMatrix<f64>, NumericsError> {
    let n = m.nrows();
    if n <= LEAF_SIZE {
        return cholesky_inverse(m, floor);
    }
    let h = n / 2;
    let a = m.view((0, 0), (h, h)).into_owned();
    let b = m.view((0, h), (h, n - h)).into_owned();
    let c = m.view((h, h), (n - h, n - h)).into_owned();

    let a_inv = block_inverse(&a, floor)?;
    let a_inv_b = &a_inv * &b;
    let mut schur = c - b.tr_mul(&a_inv_b);
    symmetrize(&mut schur);
    let s_inv = block_inverse(&schur, floor)?;

    let upper_right = -(&a_inv_b * &s_inv);
    let upper_left = a_inv - &upper_right * a_inv_b.transpose();

    let mut out = DMatrix::zeros(n, n);
    out.view_mut((0, 0), (h, h)).copy_from(&upper_left);
    out.view_mut((0, h), (h, n - h)).copy_from(&upper_right);
    out.view_mut((h, 0), (n - h, h)).copy_from(&upper_right.transpose());
    out.view_mut((h, h), (n - h, n - h)).copy_from(&s_inv);
    Ok(out)
}

/// Plain `L L^T` factorization followed by `L^{-T} L^{-1}`.
fn cholesky_inverse(m: &DMatrix<f64>, floor: f64) -> Result<DMatrix<f64>, NumericsError> {
    let n = m.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut pivot = m[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if !(pivot > floor) {
            return Err(NumericsError::Singular { pivot, floor });
        }
        let ljj = pivot.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    // Invert the lower-triangular factor column by column.
    let mut l_inv = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        l_inv[(j, j)] = 1.0 / l[(j, j)];
        for i in (j + 1)..n {
            let mut s = 0.0;
            for k in j..i {
                s -= l[(i, k)] * l_inv[(k, j)];
            }
            l_inv[(i, j)] = s / l[(i, i)];
        }
    }
    Ok(l_inv.tr_mul(&l_inv))
}

/// Positive-definite matrix together with its diagonal, for the weighted
/// norms above.
#[derive(Debug, Clone)]
pub struct WeightedNormContext {
    matrix: DMatrix<f64>,
    diag: DVector<f64>,
}

impl WeightedNormContext {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self, NumericsError> {
        check_symmetric(&matrix)?;
        let diag = matrix.diagonal();
        for (index, &value) in diag.iter().enumerate() {
            if !(value > 0.0) {
                return Err(NumericsError::NonPositiveWeight { index, value });
            }
        }
        Ok(Self { matrix, diag })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Diagonal entries `m_ii`.
    pub fn diag(&self) -> &DVector<f64> {
        &self.diag
    }

    /// Entries `m_ii^2`.
    pub fn diag_squared(&self) -> DVector<f64> {
        self.diag.map(|d| d * d)
    }

    /// Entries `1 / m_ii`.
    pub fn diag_inverse(&self) -> DVector<f64> {
        self.diag.map(|d| 1.0 / d)
    }

    pub fn l2(&self, x: &DVector<f64>) -> Result<f64, NumericsError> {
        weighted_l2_norm(x, &self.diag)
    }

    pub fn linf(&self, x: &DVector<f64>) -> Result<f64, NumericsError> {
        weighted_linf_norm(x, &self.diag)
    }

    pub fn l1(&self, x: &DVector<f64>) -> Result<f64, NumericsError> {
        weighted_l1_norm(x, &self.diag)
    }

    pub fn mahalanobis(&self, x: &DVector<f64>) -> Result<f64, NumericsError> {
        mahalanobis_norm(x, &self.matrix)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_spd(n: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut l = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            for i in j..n {
                l[(i, j)] = rng.random_range(-1.0..1.0);
            }
            l[(j, j)] = rng.random_range(0.5..2.0);
        }
        (&l * l.transpose(), l)
    }

    #[test]
    fn l2_trivial_cases() {
        let d = DVector::from_vec(vec![4.0, 1.0]);
        assert_eq!(weighted_l2_norm(&DVector::zeros(2), &d).unwrap(), 0.0);
        let e1 = DVector::from_vec(vec![1.0, 0.0]);
        assert_eq!(weighted_l2_norm(&e1, &d).unwrap(), 2.0);
    }

    #[test]
    fn linf_and_l1_trivial_cases() {
        let x = DVector::from_vec(vec![1.0, -2.0]);
        let d = DVector::from_vec(vec![3.0, 1.0]);
        assert_eq!(weighted_linf_norm(&x, &d).unwrap(), 3.0);
        assert_eq!(weighted_linf_norm(&DVector::zeros(2), &d).unwrap(), 0.0);

        let ones = DVector::from_element(2, 1.0);
        assert_eq!(weighted_l1_norm(&ones, &ones).unwrap(), 2.0);
        let x = DVector::from_vec(vec![-1.0, 2.0]);
        let d = DVector::from_vec(vec![2.0, 3.0]);
        assert_eq!(weighted_l1_norm(&x, &d).unwrap(), 8.0);
    }

    #[test]
    fn norm_errors() {
        let x = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let d = DVector::from_vec(vec![1.0, 1.0]);
        assert!(matches!(
            weighted_l2_norm(&x, &d),
            Err(NumericsError::DimensionMismatch { .. })
        ));
        let d = DVector::from_vec(vec![1.0, 0.0, 1.0]);
        assert!(matches!(
            weighted_l2_norm(&x, &d),
            Err(NumericsError::NonPositiveWeight { index: 1, .. })
        ));
        assert!(weighted_linf_norm(&DVector::zeros(2), &DVector::zeros(3)).is_err());
        assert!(weighted_l1_norm(&DVector::zeros(2), &DVector::zeros(3)).is_err());
    }

    #[test]
    fn weighted_norms_match_summation_oracles() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.random_range(1..40);
            let x = DVector::from_fn(n, |_, _| rng.random_range(-10.0..10.0));
            let d = DVector::from_fn(n, |_, _| rng.random_range(0.01..5.0));
            // Compensated (Kahan) summation as the extended-precision oracle.
            let (mut sum, mut comp) = (0.0f64, 0.0f64);
            for i in 0..n {
                let term = d[i] * x[i] * x[i] - comp;
                let t = sum + term;
                comp = (t - sum) - term;
                sum = t;
            }
            let l2 = weighted_l2_norm(&x, &d).unwrap();
            assert!((l2 - sum.sqrt()).abs() <= 1e-12 * sum.sqrt().max(1e-300));

            let mut best = 0.0f64;
            let mut total = 0.0f64;
            for i in 0..n {
                let v = d[i] * x[i].abs();
                if v > best {
                    best = v;
                }
                total += v;
            }
            assert_eq!(weighted_linf_norm(&x, &d).unwrap(), best);
            assert!((weighted_l1_norm(&x, &d).unwrap() - total).abs() <= 1e-12 * total);
        }
    }

    #[test]
    fn mahalanobis_cases() {
        let x = DVector::from_vec(vec![3.0, 4.0]);
        let i2 = DMatrix::<f64>::identity(2, 2);
        assert!((mahalanobis_norm(&x, &i2).unwrap() - 5.0).abs() < 1e-15);

        let m = DMatrix::from_row_slice(3, 3, &[9.0, 0.0, 0.0, 0.0, 2.0, 0.5, 0.0, 0.5, 1.0]);
        let e1 = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        assert_eq!(mahalanobis_norm(&e1, &m).unwrap(), 3.0);

        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(matches!(
            mahalanobis_norm(&x, &asym),
            Err(NumericsError::NotSymmetric { .. })
        ));
    }

    #[test]
    fn mahalanobis_matches_cholesky_factor_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for seed in 0..30 {
            let n = 1 + seed as usize % 12;
            let (m, l) = random_spd(n, seed);
            let x = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
            let oracle = (l.transpose() * &x).norm();
            let got = mahalanobis_norm(&x, &m).unwrap();
            assert!((got - oracle).abs() <= 1e-10 * oracle.max(1.0));
        }
    }

    #[test]
    fn spd_inverse_trivial_cases() {
        let i3 = DMatrix::<f64>::identity(3, 3);
        assert_eq!(spd_inverse(&i3).unwrap(), i3);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 4.0]));
        let inv = spd_inverse(&d).unwrap();
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.25]));
        assert!((inv - expected).amax() < 1e-15);
    }

    #[test]
    fn spd_inverse_residual_small_and_large() {
        for (n, seed) in [(5, 1u64), (63, 2), (64, 3), (65, 4), (150, 5), (301, 6)] {
            let (mut m, _) = random_spd(n, seed);
            // Keep the condition number moderate.
            for i in 0..n {
                m[(i, i)] += n as f64;
            }
            let inv = spd_inverse(&m).unwrap();
            let resid = (&m * &inv - DMatrix::<f64>::identity(n, n)).amax();
            assert!(resid < 1e-8, "n={n} resid={resid}");
            assert_eq!(max_asymmetry(&inv), 0.0);
            let back = spd_inverse(&inv).unwrap();
            assert!((&back - &m).amax() <= 1e-8 * m.amax());
        }
    }

    #[test]
    fn spd_inverse_rejects_singular_and_indefinite() {
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(spd_inverse(&singular), Err(NumericsError::Singular { .. })));
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(spd_inverse(&indefinite), Err(NumericsError::Singular { .. })));
        let zero = DMatrix::<f64>::zeros(3, 3);
        assert!(spd_inverse(&zero).is_err());
        let rect = DMatrix::<f64>::zeros(2, 3);
        assert!(matches!(spd_inverse(&rect), Err(NumericsError::NotSquare { .. })));
    }

    #[test]
    fn context_rejects_nonpositive_diagonal() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(WeightedNormContext::new(m).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn norm_inequalities_hold(n in 1usize..30, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let (m, _) = random_spd(n, seed);
            let ctx = WeightedNormContext::new(m).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xabcdef);
            let x = DVector::from_fn(n, |_, _| rng.random_range(-5.0..5.0));
            let y = DVector::from_fn(n, |_, _| rng.random_range(-5.0..5.0));
            let sq = ctx.diag_squared();
            let l2_sq = weighted_l2_norm(&x, &sq).unwrap();
            let rootn = (n as f64).sqrt();
            prop_assert!(ctx.linf(&x).unwrap() <= l2_sq * (1.0 + 1e-12) + 1e-12);
            prop_assert!(ctx.l1(&x).unwrap() <= rootn * l2_sq * (1.0 + 1e-12) + 1e-12);
            prop_assert!(ctx.mahalanobis(&x).unwrap() <= rootn * ctx.l2(&x).unwrap() * (1.0 + 1e-12) + 1e-12);
            let dual = ctx.l1(&x).unwrap() * weighted_linf_norm(&y, &ctx.diag_inverse()).unwrap();
            prop_assert!(x.dot(&y).abs() <= dual * (1.0 + 1e-12) + 1e-12);
        }
    }
}
