//! Spectral primitives for symmetric matrices: eigendecomposition, Schatten
//! norms, eigenvalue soft-thresholding, thresholded rank and effective rank.

use nalgebra::DMatrix;
use thiserror::Error;

/// Numerical-rank cutoff relative to the leading eigenvalue.
pub const RANK_TINY: f64 = 1e-12;

/// Relative tolerance below which negative eigenvalues are treated as noise
/// and clamped to zero.
const PSD_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error("matrix contains a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("dimension must be at least 2, got {0}")]
    DimensionTooSmall(usize),

    #[error("entry rows have inconsistent lengths: expected {expected}, row {row} has {actual}")]
    RaggedRows {
        expected: usize,
        row: usize,
        actual: usize,
    },

    #[error("matrix is not positive semidefinite: eigenvalue {eigenvalue} below tolerance {tolerance}")]
    NotPositiveSemidefinite { eigenvalue: f64, tolerance: f64 },

    #[error("operation undefined for the zero matrix")]
    ZeroMatrix,
}

/// A d×d real symmetric matrix, symmetrized on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    data: DMatrix<f64>,
}

impl SymmetricMatrix {
    /// Builds from an arbitrary square matrix by averaging with its transpose.
    pub fn new(data: DMatrix<f64>) -> Result<Self, MatrixError> {
        let d = data.nrows();
        if d < 2 || data.ncols() != d {
            return Err(MatrixError::DimensionTooSmall(d.min(data.ncols())));
        }
        for i in 0..d {
            for j in 0..d {
                if !data[(i, j)].is_finite() {
                    return Err(MatrixError::NonFinite { row: i, col: j });
                }
            }
        }
        let mut sym = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                sym[(i, j)] = 0.5 * (data[(i, j)] + data[(j, i)]);
            }
        }
        Ok(Self { data: sym })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, MatrixError> {
        let d = rows.len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(MatrixError::RaggedRows {
                    expected: d,
                    row: i,
                    actual: row.len(),
                });
            }
        }
        Self::new(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
    }

    pub fn diagonal(entries: &[f64]) -> Result<Self, MatrixError> {
        let d = entries.len();
        Self::new(DMatrix::from_fn(d, d, |i, j| {
            if i == j {
                entries[i]
            } else {
                0.0
            }
        }))
    }

    pub fn identity(d: usize) -> Result<Self, MatrixError> {
        Self::new(DMatrix::identity(d, d))
    }

    pub fn zeros(d: usize) -> Result<Self, MatrixError> {
        Self::new(DMatrix::zeros(d, d))
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        self.data.trace()
    }

    /// Largest absolute entry.
    pub fn max_abs_entry(&self) -> f64 {
        self.data.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    pub fn frobenius_distance(&self, other: &SymmetricMatrix) -> f64 {
        (&self.data - &other.data).norm()
    }
}

/// Ordered spectral decomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    /// Eigenvalues sorted in descending order.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors as columns, in eigenvalue order.
    pub eigenvectors: DMatrix<f64>,
}

impl EigenSystem {
    /// Rebuilds the source matrix as U diag(s) Uᵀ.
    pub fn reconstruct(&self) -> SymmetricMatrix {
        let lambda = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(self.eigenvalues.clone()));
        let m = &self.eigenvectors * lambda * self.eigenvectors.transpose();
        SymmetricMatrix::new(m).expect("reconstruction of a valid eigensystem")
    }

    /// Spectral norm (largest absolute eigenvalue).
    pub fn spectral_norm(&self) -> f64 {
        self.eigenvalues
            .iter()
            .fold(0.0f64, |acc, v| acc.max(v.abs()))
    }
}

/// Spectral decomposition with descending eigenvalues and a deterministic
/// sign convention: each eigenvector's component of largest magnitude is
/// made positive.
pub fn eigen_sym(m: &SymmetricMatrix) -> EigenSystem {
    let d = m.dim();
    let se = m.data.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        se.eigenvalues[b]
            .partial_cmp(&se.eigenvalues[a])
            .expect("finite eigenvalues")
    });
    let mut eigenvalues = Vec::with_capacity(d);
    let mut eigenvectors = DMatrix::zeros(d, d);
    for (col, &k) in order.iter().enumerate() {
        eigenvalues.push(se.eigenvalues[k]);
        let mut v: Vec<f64> = se.eigenvectors.column(k).iter().copied().collect();
        // Sign convention: first component of largest magnitude positive.
        let mut pivot = 0;
        for (i, &x) in v.iter().enumerate() {
            if x.abs() > v[pivot].abs() + 1e-14 {
                pivot = i;
            }
        }
        if v[pivot] < 0.0 {
            for x in v.iter_mut() {
                *x = -*x;
            }
        }
        for i in 0..d {
            eigenvectors[(i, col)] = v[i];
        }
    }
    EigenSystem {
        eigenvalues,
        eigenvectors,
    }
}

/// Schatten norm order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchattenP {
    /// Nuclear norm: sum of singular values.
    One,
    /// Frobenius norm.
    Two,
    /// Spectral norm: largest singular value.
    Inf,
}

pub fn schatten_norm(m: &SymmetricMatrix, p: SchattenP) -> f64 {
    match p {
        SchattenP::Two => m.data.norm(),
        SchattenP::One => eigen_sym(m).eigenvalues.iter().map(|s| s.abs()).sum(),
        SchattenP::Inf => eigen_sym(m).spectral_norm(),
    }
}

/// Soft-thresholds the eigenvalues of a PSD matrix: s ↦ max{s − λ/2, 0}.
///
/// Eigenvalues in [−1e-10·‖M‖_∞, 0) are clamped to zero; anything more
/// negative is rejected as not positive semidefinite.
pub fn soft_threshold_eigen(
    m: &SymmetricMatrix,
    lambda: f64,
) -> Result<SymmetricMatrix, MatrixError> {
    assert!(lambda >= 0.0, "lambda must be nonnegative");
    let mut es = eigen_sym(m);
    let spectral = es.spectral_norm();
    let tol = PSD_TOL * spectral;
    for s in es.eigenvalues.iter_mut() {
        if *s < -tol {
            return Err(MatrixError::NotPositiveSemidefinite {
                eigenvalue: *s,
                tolerance: -tol,
            });
        }
        *s = (s.max(0.0) - 0.5 * lambda).max(0.0);
    }
    Ok(es.reconstruct())
}

/// Number of singular values ≥ eps (inclusive threshold). rank_eps(M, 0) = d.
pub fn rank_eps(m: &SymmetricMatrix, eps: f64) -> usize {
    eigen_sym(m)
        .eigenvalues
        .iter()
        .filter(|s| s.abs() >= eps)
        .count()
}

/// Effective rank tr(M) / ‖M‖_∞ of a nonzero PSD matrix; lies in [1, d].
pub fn effective_rank(m: &SymmetricMatrix) -> Result<f64, MatrixError> {
    let spectral = eigen_sym(m).spectral_norm();
    if spectral == 0.0 {
        return Err(MatrixError::ZeroMatrix);
    }
    Ok(m.trace() / spectral)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(d: usize, rng: &mut impl rand::Rng) -> SymmetricMatrix {
        SymmetricMatrix::new(DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0))).unwrap()
    }

    fn random_psd(d: usize, rng: &mut impl rand::Rng) -> SymmetricMatrix {
        let b = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
        SymmetricMatrix::new(&b * b.transpose()).unwrap()
    }

    #[test]
    fn eigen_identity() {
        let es = eigen_sym(&SymmetricMatrix::identity(3).unwrap());
        for s in &es.eigenvalues {
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn eigen_diagonal_sorted() {
        let es = eigen_sym(&SymmetricMatrix::diagonal(&[2.0, 5.0, 1.0]).unwrap());
        assert!((es.eigenvalues[0] - 5.0).abs() < 1e-12);
        assert!((es.eigenvalues[1] - 2.0).abs() < 1e-12);
        assert!((es.eigenvalues[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eigen_roundtrip_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let m = random_symmetric(6, &mut rng);
            let es = eigen_sym(&m);
            let back = es.reconstruct();
            let scale = 1.0 + eigen_sym(&m).spectral_norm();
            for i in 0..6 {
                for j in 0..6 {
                    assert!((back.get(i, j) - m.get(i, j)).abs() <= 1e-8 * scale);
                }
            }
            // Orthonormality.
            let u = &es.eigenvectors;
            let gram = u.transpose() * u;
            for i in 0..6 {
                for j in 0..6 {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((gram[(i, j)] - expect).abs() <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn eigen_rejects_non_finite() {
        let mut m = DMatrix::zeros(2, 2);
        m[(0, 1)] = f64::NAN;
        assert!(matches!(
            SymmetricMatrix::new(m),
            Err(MatrixError::NonFinite { .. })
        ));
    }

    #[test]
    fn eigenvector_sign_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = random_symmetric(5, &mut rng);
        let a = eigen_sym(&m);
        let b = eigen_sym(&m);
        assert_eq!(a.eigenvectors, b.eigenvectors);
        for col in 0..5 {
            let v: Vec<f64> = a.eigenvectors.column(col).iter().copied().collect();
            let mut pivot = 0;
            for (i, &x) in v.iter().enumerate() {
                if x.abs() > v[pivot].abs() + 1e-14 {
                    pivot = i;
                }
            }
            assert!(v[pivot] > 0.0);
        }
    }

    #[test]
    fn schatten_trivials() {
        let id4 = SymmetricMatrix::identity(4).unwrap();
        assert!((schatten_norm(&id4, SchattenP::One) - 4.0).abs() < 1e-12);
        let m = SymmetricMatrix::diagonal(&[3.0, -4.0]).unwrap();
        assert!((schatten_norm(&m, SchattenP::Inf) - 4.0).abs() < 1e-12);
        let m = SymmetricMatrix::diagonal(&[3.0, 4.0]).unwrap();
        assert!((schatten_norm(&m, SchattenP::Two) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn soft_threshold_no_penalty_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_psd(4, &mut rng);
        let out = soft_threshold_eigen(&m, 0.0).unwrap();
        assert!(out.frobenius_distance(&m) < 1e-9 * (1.0 + m.max_abs_entry()));
    }

    #[test]
    fn soft_threshold_diagonal() {
        let m = SymmetricMatrix::diagonal(&[4.0, 1.0]).unwrap();
        let out = soft_threshold_eigen(&m, 2.0).unwrap();
        assert!((out.get(0, 0) - 3.0).abs() < 1e-12);
        assert!(out.get(1, 1).abs() < 1e-12);
    }

    #[test]
    fn soft_threshold_rejects_indefinite() {
        let m = SymmetricMatrix::diagonal(&[1.0, -0.5]).unwrap();
        assert!(matches!(
            soft_threshold_eigen(&m, 1.0),
            Err(MatrixError::NotPositiveSemidefinite { .. })
        ));
    }

    /// Objective of the penalized problem: ‖M − A‖₂² + λ‖A‖₁.
    fn objective(m: &SymmetricMatrix, a: &SymmetricMatrix, lambda: f64) -> f64 {
        let diff = m.frobenius_distance(a);
        diff * diff + lambda * schatten_norm(a, SchattenP::One)
    }

    /// Projected-subgradient descent on the same objective, restricted to the
    /// PSD cone. Independent of the closed-form solution path.
    pub(crate) fn projected_subgradient_oracle(
        m: &SymmetricMatrix,
        lambda: f64,
        iters: usize,
    ) -> SymmetricMatrix {
        let mut a = m.clone();
        let mut best = a.clone();
        let mut best_obj = objective(m, &a, lambda);
        for it in 0..iters {
            let es = eigen_sym(&a);
            // Subgradient: 2(A − M) + λ U sign(Λ) Uᵀ.
            let signs: Vec<f64> = es.eigenvalues.iter().map(|s| s.signum()).collect();
            let sign_mat = &es.eigenvectors
                * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(signs))
                * es.eigenvectors.transpose();
            let grad = 2.0 * (a.as_matrix() - m.as_matrix()) + lambda * sign_mat;
            let step = 0.5 / (1.0 + it as f64).sqrt();
            let proposal = a.as_matrix() - step * grad;
            // Project onto the PSD cone.
            let mut pes = eigen_sym(&SymmetricMatrix::new(proposal).unwrap());
            for s in pes.eigenvalues.iter_mut() {
                *s = s.max(0.0);
            }
            a = pes.reconstruct();
            let obj = objective(m, &a, lambda);
            if obj < best_obj {
                best_obj = obj;
                best = a.clone();
            }
        }
        best
    }

    #[test]
    fn soft_threshold_beats_subgradient_oracle_and_random_candidates() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..5 {
            let m = random_psd(4, &mut rng);
            for &lambda in &[0.3, 1.0] {
                let closed = soft_threshold_eigen(&m, lambda).unwrap();
                let closed_obj = objective(&m, &closed, lambda);
                let oracle = projected_subgradient_oracle(&m, lambda, 2_000);
                assert!(closed_obj <= objective(&m, &oracle, lambda) + 1e-6);
                for _ in 0..200 {
                    let cand = random_psd(4, &mut rng);
                    assert!(closed_obj <= objective(&m, &cand, lambda) + 1e-6);
                }
            }
        }
    }

    #[test]
    fn rank_eps_examples() {
        let m = SymmetricMatrix::diagonal(&[3.0, 1.0, 0.1]).unwrap();
        assert_eq!(rank_eps(&m, 0.5), 2);
        assert_eq!(rank_eps(&m, 0.0), 3);
        let ones = SymmetricMatrix::identity(3).unwrap();
        assert_eq!(rank_eps(&ones, 1.0), 3); // inclusive threshold
    }

    #[test]
    fn effective_rank_examples() {
        assert!((effective_rank(&SymmetricMatrix::identity(30).unwrap()).unwrap() - 30.0).abs() < 1e-9);
        let m = SymmetricMatrix::diagonal(&[5.0, 0.0, 0.0]).unwrap();
        assert!((effective_rank(&m).unwrap() - 1.0).abs() < 1e-12);
        let m = SymmetricMatrix::diagonal(&[4.0, 2.0, 2.0]).unwrap();
        assert!((effective_rank(&m).unwrap() - 2.0).abs() < 1e-12);
        assert!(matches!(
            effective_rank(&SymmetricMatrix::zeros(3).unwrap()),
            Err(MatrixError::ZeroMatrix)
        ));
    }

    #[test]
    fn rank_monotone_in_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_psd(5, &mut rng);
        let tiny = RANK_TINY * eigen_sym(&m).spectral_norm().max(1.0);
        let mut prev = usize::MAX;
        for &lambda in &[0.0, 0.1, 0.5, 1.0, 5.0, 50.0] {
            let out = soft_threshold_eigen(&m, lambda).unwrap();
            let r = rank_eps(&out, tiny);
            assert!(r <= prev);
            prev = r;
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn contraction_bound(seed in 0u64..1000, lambda in 0.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_psd(4, &mut rng);
            let out = soft_threshold_eigen(&m, lambda).unwrap();
            let diff = SymmetricMatrix::new(m.as_matrix() - out.as_matrix()).unwrap();
            prop_assert!(schatten_norm(&diff, SchattenP::Inf) <= 0.5 * lambda + 1e-9);
        }

        #[test]
        fn frobenius_matches_entry_sum(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_symmetric(4, &mut rng);
            let entry_sum: f64 = m.as_matrix().iter().map(|v| v * v).sum();
            let fro2 = schatten_norm(&m, SchattenP::Two).powi(2);
            prop_assert!((fro2 - entry_sum).abs() <= 1e-10 * entry_sum.max(1e-30));
        }

        #[test]
        fn rank_eps_non_increasing(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_psd(4, &mut rng);
            let mut prev = usize::MAX;
            for i in 0..20 {
                let eps = i as f64 * 0.25;
                let r = rank_eps(&m, eps);
                prop_assert!(r <= prev);
                prev = r;
            }
        }
    }
}
