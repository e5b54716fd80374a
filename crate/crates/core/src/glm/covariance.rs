//! Empirical second-moment matrix `Ĉ = (1/n) Σ x_i x_iᵀ` and the condition
//! numbers derived from it.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::glm::dataset::Dataset;
use crate::linalg::SymEigen;
use crate::RANK_TOL;

#[derive(Debug, Clone)]
pub struct CovarianceSummary {
    pub c_hat: DMatrix<f64>,
    pub trace: f64,
    /// Sorted descending, clamped at zero from below.
    pub eigenvalues: DVector<f64>,
    /// Columns ordered like `eigenvalues`.
    pub eigenvectors: DMatrix<f64>,
    /// Number of eigenvalues `≥ RANK_TOL · λ_max`.
    pub rank: usize,
    /// Smallest eigenvalue counted in `rank`; zero when `rank == 0`.
    pub lambda_min_nonzero: f64,
    /// `trace / lambda_min_nonzero`; zero when `rank == 0`.
    pub kappa_c: f64,
    pub per_point_norms_sq: DVector<f64>,
}

impl CovarianceSummary {
    pub fn dim(&self) -> usize {
        self.c_hat.nrows()
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues[0]
    }

    /// Orthonormal basis of `span{x_i}` (the nonzero eigenspace), `d × rank`.
    pub fn span_basis(&self) -> DMatrix<f64> {
        self.eigenvectors.columns(0, self.rank).into_owned()
    }

    /// Orthogonal projection of `v` onto the span of the data.
    pub fn project_onto_span(&self, v: &DVector<f64>) -> DVector<f64> {
        if self.rank == self.dim() {
            return v.clone();
        }
        let basis = self.eigenvectors.columns(0, self.rank);
        basis * (basis.transpose() * v)
    }
}

/// Summarises the empirical covariance of `dataset`. The sum over samples
/// runs in index order.
pub fn empirical_covariance(dataset: &Dataset) -> Result<CovarianceSummary> {
    let x = dataset.x();
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite instance entries".into()));
    }
    let (n, d) = (x.nrows(), x.ncols());
    let mut c = DMatrix::<f64>::zeros(d, d);
    let mut norms = DVector::<f64>::zeros(n);
    for i in 0..n {
        let row = x.row(i);
        for a in 0..d {
            let xa = row[a];
            for b in a..d {
                c[(a, b)] += xa * row[b];
            }
        }
        norms[i] = row.norm_squared();
    }
    let inv_n = 1.0 / n as f64;
    for a in 0..d {
        for b in a..d {
            let v = c[(a, b)] * inv_n;
            c[(a, b)] = v;
            c[(b, a)] = v;
        }
    }
    Ok(summarize(c, norms))
}

/// Spectral summary of an explicit PSD matrix (per-point norms left empty).
pub fn summarize_matrix(c: DMatrix<f64>) -> CovarianceSummary {
    summarize(c, DVector::zeros(0))
}

fn summarize(c: DMatrix<f64>, per_point_norms_sq: DVector<f64>) -> CovarianceSummary {
    let mut eig = SymEigen::new(&c);
    eig.values.apply(|v| *v = v.max(0.0));
    let rank = eig.rank(RANK_TOL);
    let lambda_min_nonzero = if rank == 0 { 0.0 } else { eig.values[rank - 1] };
    let trace = c.trace();
    let kappa_c = if rank == 0 { 0.0 } else { trace / lambda_min_nonzero };
    CovarianceSummary {
        c_hat: c,
        trace,
        eigenvalues: eig.values,
        eigenvectors: eig.vectors,
        rank,
        lambda_min_nonzero,
        kappa_c,
        per_point_norms_sq,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn diagonal_example() {
        let ds = Dataset::from_rows(&[vec![2.0, 0.0], vec![0.0, 2f64.sqrt()]], &[0.0, 0.0], 1.0)
            .unwrap();
        let cov = empirical_covariance(&ds).unwrap();
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0]));
        assert_relative_eq!(cov.c_hat, expected, epsilon = 1e-15);
        assert_relative_eq!(cov.trace, 3.0, epsilon = 1e-15);
        assert_relative_eq!(cov.kappa_c, 3.0, epsilon = 1e-14);
        assert_eq!(cov.rank, 2);
        assert_relative_eq!(cov.per_point_norms_sq[0], 4.0);
        assert_relative_eq!(cov.per_point_norms_sq[1], 2.0, epsilon = 1e-15);
    }

    #[test]
    fn rank_one_data() {
        for n in [2, 5, 17] {
            let rows = vec![vec![1.0, 0.0]; n];
            let ds = Dataset::from_rows(&rows, &vec![0.0; n], 1.0).unwrap();
            let cov = empirical_covariance(&ds).unwrap();
            assert_eq!(cov.rank, 1);
            assert_eq!(cov.lambda_min_nonzero, 1.0);
            assert_eq!(cov.kappa_c, 1.0);
            let p = cov.project_onto_span(&DVector::from_vec(vec![3.0, 4.0]));
            assert_relative_eq!(p, DVector::from_vec(vec![3.0, 0.0]), epsilon = 1e-15);
        }
    }

    #[test]
    fn identity_covariance_has_kappa_d() {
        // ±√d e_j over all j: 2d rows of squared norm d give Ĉ = I
        let d = 4;
        let s = (d as f64).sqrt();
        let mut rows = Vec::new();
        for j in 0..d {
            for sign in [1.0, -1.0] {
                let mut r = vec![0.0; d];
                r[j] = sign * s;
                rows.push(r);
            }
        }
        let ds = Dataset::from_rows(&rows, &vec![0.0; rows.len()], 1.0).unwrap();
        let cov = empirical_covariance(&ds).unwrap();
        assert_relative_eq!(cov.c_hat, DMatrix::identity(d, d), epsilon = 1e-14);
        assert_relative_eq!(cov.kappa_c, d as f64, epsilon = 1e-12);
    }

    #[test]
    fn zero_data() {
        let ds = Dataset::from_rows(&[vec![0.0, 0.0], vec![0.0, 0.0]], &[0.5, -0.5], 1.0).unwrap();
        let cov = empirical_covariance(&ds).unwrap();
        assert_eq!(cov.rank, 0);
        assert_eq!(cov.kappa_c, 0.0);
        assert_eq!(cov.project_onto_span(&DVector::from_vec(vec![1.0, 1.0])).norm(), 0.0);
    }

    #[test]
    fn trace_matches_eigen_sum_and_kappa_at_least_rank() {
        let rows: Vec<Vec<f64>> = (0..7)
            .map(|i| {
                let t = i as f64;
                vec![t.sin(), (2.0 * t).cos(), 0.3 * t - 1.0]
            })
            .collect();
        let ds = Dataset::from_rows(&rows, &[0.0; 7], 1.0).unwrap();
        let cov = empirical_covariance(&ds).unwrap();
        assert!((cov.trace - cov.eigenvalues.sum()).abs() <= 1e-10 * cov.trace);
        assert!(cov.kappa_c >= cov.rank as f64);
    }
}
