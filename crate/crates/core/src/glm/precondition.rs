//! Preconditioning `x ↦ P^{-1/2} x` together with the domain map
//! `W ↦ P^{1/2} W`, which leaves every prediction `wᵀx` unchanged.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::glm::covariance::CovarianceSummary;
use crate::glm::dataset::Dataset;
use crate::glm::domain::{Domain, QuadForm};
use crate::linalg::{check_square, relative_asymmetry, symmetrize, SymEigen};

/// A positive definite `P` with its symmetric square root and inverse square root.
#[derive(Debug, Clone)]
pub struct Preconditioner {
    pub p: DMatrix<f64>,
    pub p_inv_sqrt: DMatrix<f64>,
    pub p_sqrt: DMatrix<f64>,
    /// Null-space completion used to build `P`, zero if none.
    pub delta: f64,
}

impl Preconditioner {
    pub fn identity(d: usize) -> Self {
        let i = DMatrix::identity(d, d);
        Self { p: i.clone(), p_inv_sqrt: i.clone(), p_sqrt: i, delta: 0.0 }
    }

    pub fn dim(&self) -> usize {
        self.p.nrows()
    }

    /// True when `P` is exactly the identity matrix.
    pub fn is_identity(&self) -> bool {
        let d = self.dim();
        self.p == DMatrix::identity(d, d)
    }

    /// `P^{-1}`
    pub fn p_inv(&self) -> DMatrix<f64> {
        symmetrize(&(&self.p_inv_sqrt * &self.p_inv_sqrt))
    }

    /// Condition number `λ_max(P) / λ_min(P)`.
    pub fn condition_number(&self) -> f64 {
        let e = SymEigen::new(&self.p);
        e.max() / e.values[e.dim() - 1]
    }

    fn from_eigen(p: DMatrix<f64>, eig: &SymEigen, delta: f64) -> Self {
        Self {
            p,
            p_inv_sqrt: eig.spectral_map(|v| 1.0 / v.sqrt()),
            p_sqrt: eig.spectral_map(f64::sqrt),
            delta,
        }
    }
}

/// Builds the preconditioner for `P` from its symmetric eigendecomposition.
pub fn inverse_sqrt(p: &DMatrix<f64>, rank_tol: f64) -> Result<Preconditioner> {
    check_square(p, "preconditioner")?;
    let asym = relative_asymmetry(p);
    if asym > 1e-10 {
        return Err(Error::NotSymmetric(asym));
    }
    let p = symmetrize(p);
    let eig = SymEigen::new(&p);
    let lmin = eig.values[eig.dim() - 1];
    let threshold = rank_tol * eig.max();
    if !(lmin > 0.0) || lmin < threshold {
        return Err(Error::NotPositiveDefinite { eigenvalue: lmin, threshold });
    }
    Ok(Preconditioner::from_eigen(p, &eig, 0.0))
}

/// Maps the sample and the domain through the preconditioner.
///
/// Rows become `P^{-1/2} x_i`. A Euclidean ball of radius `r` maps to the
/// ellipsoid `{v : vᵀ P^{-1} v ≤ r²}` and `QuadBall(A, r)` to
/// `QuadBall(P^{-1/2} A P^{-1/2}, r)`. The identity preconditioner returns
/// both inputs unchanged.
pub fn precondition(
    dataset: &Dataset,
    domain: &Domain,
    pre: &Preconditioner,
) -> Result<(Dataset, Domain)> {
    if pre.dim() != dataset.d() {
        return Err(Error::Argument(format!(
            "preconditioner has dimension {} but data has dimension {}",
            pre.dim(),
            dataset.d()
        )));
    }
    domain.check_dim(dataset.d())?;
    if pre.is_identity() {
        return Ok((dataset.clone(), domain.clone()));
    }
    let mapped_domain = match domain {
        Domain::EuclideanBall { radius } => Domain::QuadBall(QuadForm::new(pre.p_inv(), *radius)?),
        Domain::QuadBall(q) => {
            let a = &pre.p_inv_sqrt * q.matrix() * &pre.p_inv_sqrt;
            Domain::QuadBall(QuadForm::new(symmetrize(&a), q.radius())?)
        }
        Domain::L1Ball { .. } => return Err(Error::UnsupportedDomainTransform("l1_ball")),
        Domain::Box { .. } => return Err(Error::UnsupportedDomainTransform("box")),
    };
    Ok((dataset.map_instances(&pre.p_inv_sqrt), mapped_domain))
}

/// `P = Ĉ` for full-rank data, otherwise `Ĉ + δ (I − Ĉ Ĉ†)`, built by
/// replacing the zero eigenvalues of `Ĉ` with `δ`. Either way the
/// preconditioned covariance has condition number `rank(Ĉ)`.
pub fn optimal_preconditioner(cov: &CovarianceSummary, delta: f64) -> Result<Preconditioner> {
    let d = cov.dim();
    if cov.rank == d {
        let eig = SymEigen {
            values: cov.eigenvalues.clone(),
            vectors: cov.eigenvectors.clone(),
        };
        return Ok(Preconditioner::from_eigen(cov.c_hat.clone(), &eig, 0.0));
    }
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::Argument(format!(
            "covariance has rank {} < {d}; completion delta must be positive, got {delta}",
            cov.rank
        )));
    }
    let values = DVector::from_iterator(
        d,
        cov.eigenvalues
            .iter()
            .enumerate()
            .map(|(k, &v)| if k < cov.rank { v } else { delta }),
    );
    let eig = SymEigen { values, vectors: cov.eigenvectors.clone() };
    let p = eig.spectral_map(|v| v);
    Ok(Preconditioner::from_eigen(p, &eig, delta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glm::covariance::{empirical_covariance, summarize_matrix};
    use crate::linalg::trace_condition;
    use crate::RANK_TOL;
    use approx::assert_relative_eq;

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(v))
    }

    fn check_invariants(pre: &Preconditioner) {
        let d = pre.dim();
        let i = DMatrix::<f64>::identity(d, d);
        let e1 = (&pre.p_inv_sqrt * &pre.p * &pre.p_inv_sqrt - &i).norm();
        let e2 = (&pre.p_sqrt * &pre.p_inv_sqrt - &i).norm();
        assert!(e1 <= 1e-8 * d as f64, "{e1}");
        assert!(e2 <= 1e-8 * d as f64, "{e2}");
    }

    #[test]
    fn inverse_sqrt_examples() {
        let pre = inverse_sqrt(&diag(&[4.0, 9.0]), RANK_TOL).unwrap();
        assert_relative_eq!(pre.p_inv_sqrt, diag(&[0.5, 1.0 / 3.0]), epsilon = 1e-15);
        check_invariants(&pre);

        let pre = inverse_sqrt(&DMatrix::identity(3, 3), RANK_TOL).unwrap();
        assert_relative_eq!(pre.p_inv_sqrt, DMatrix::identity(3, 3), epsilon = 1e-15);

        let p = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let pre = inverse_sqrt(&p, RANK_TOL).unwrap();
        let e = SymEigen::new(&p);
        assert_relative_eq!(e.values[0], 3.0, epsilon = 1e-14);
        assert_relative_eq!(e.values[1], 1.0, epsilon = 1e-14);
        let ident = &pre.p_inv_sqrt * &p * &pre.p_inv_sqrt;
        assert!((ident - DMatrix::identity(2, 2)).norm() <= 1e-10);
        check_invariants(&pre);
    }

    #[test]
    fn inverse_sqrt_rejects_singular() {
        assert!(matches!(
            inverse_sqrt(&diag(&[1.0, 0.0]), RANK_TOL),
            Err(Error::NotPositiveDefinite { .. })
        ));
        assert!(matches!(
            inverse_sqrt(&diag(&[1.0, 1e-12]), RANK_TOL),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn scalar_preconditioner_scales_rows_and_domain() {
        let ds = Dataset::from_rows(&[vec![2.0, 0.0], vec![0.0, -4.0]], &[0.0, 0.0], 1.0).unwrap();
        let pre = inverse_sqrt(&diag(&[4.0, 4.0]), RANK_TOL).unwrap();
        let (ds_p, dom_p) = precondition(&ds, &Domain::euclidean_ball(1.0).unwrap(), &pre).unwrap();
        assert_relative_eq!(ds_p.x(), &(ds.x() * 0.5), epsilon = 1e-15);
        match &dom_p {
            Domain::QuadBall(q) => {
                assert_relative_eq!(q.matrix(), &diag(&[0.25, 0.25]), epsilon = 1e-15);
                assert_eq!(q.radius(), 1.0);
            }
            other => panic!("unexpected {other}"),
        }
        // {v : ¼‖v‖² ≤ 1} is the ball of radius 2
        assert!(dom_p.contains(&DVector::from_vec(vec![2.0, 0.0]), 1e-12));
        assert!(!dom_p.contains(&DVector::from_vec(vec![2.01, 0.0]), 1e-12));
    }

    #[test]
    fn identity_preconditioner_is_noop() {
        let ds = Dataset::from_rows(&[vec![2.0, 1.0], vec![0.5, -4.0]], &[0.1, 0.0], 1.0).unwrap();
        let dom = Domain::euclidean_ball(1.0).unwrap();
        let (ds_p, dom_p) = precondition(&ds, &dom, &Preconditioner::identity(2)).unwrap();
        assert_eq!(ds_p, ds);
        assert!(matches!(dom_p, Domain::EuclideanBall { radius } if radius == 1.0));
    }

    #[test]
    fn l1_and_box_are_rejected() {
        let ds = Dataset::from_rows(&[vec![2.0, 1.0], vec![0.5, -4.0]], &[0.1, 0.0], 1.0).unwrap();
        let pre = inverse_sqrt(&diag(&[2.0, 1.0]), RANK_TOL).unwrap();
        for dom in [Domain::l1_ball(1.0).unwrap(), Domain::box_ball(1.0).unwrap()] {
            assert!(matches!(
                precondition(&ds, &dom, &pre),
                Err(Error::UnsupportedDomainTransform(_))
            ));
            // identity is always allowed
            assert!(precondition(&ds, &dom, &Preconditioner::identity(2)).is_ok());
        }
    }

    #[test]
    fn optimal_full_rank_whitens() {
        let ds = Dataset::from_rows(&[vec![2.0, 0.0], vec![0.0, 2f64.sqrt()]], &[0.0, 0.0], 1.0)
            .unwrap();
        let cov = empirical_covariance(&ds).unwrap();
        let pre = optimal_preconditioner(&cov, 0.0).unwrap();
        assert_relative_eq!(pre.p, diag(&[2.0, 1.0]), epsilon = 1e-14);
        assert_eq!(pre.delta, 0.0);
        let (ds_p, _) = precondition(&ds, &Domain::euclidean_ball(1.0).unwrap(), &pre).unwrap();
        let cov_p = empirical_covariance(&ds_p).unwrap();
        assert_relative_eq!(cov_p.c_hat, DMatrix::identity(2, 2), epsilon = 1e-12);
        assert_relative_eq!(cov_p.kappa_c, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn optimal_rank_deficient_completion() {
        let cov = summarize_matrix(diag(&[1.0, 0.0]));
        assert!(optimal_preconditioner(&cov, 0.0).is_err());
        let pre = optimal_preconditioner(&cov, 1.0).unwrap();
        assert_relative_eq!(pre.p, DMatrix::identity(2, 2), epsilon = 1e-15);
        let whitened = &pre.p_inv_sqrt * &cov.c_hat * &pre.p_inv_sqrt;
        assert_relative_eq!(trace_condition(&whitened.diagonal(), RANK_TOL), 1.0, epsilon = 1e-12);

        let cov = summarize_matrix(DMatrix::identity(3, 3));
        let pre = optimal_preconditioner(&cov, 5.0).unwrap();
        assert_relative_eq!(pre.p, DMatrix::identity(3, 3), epsilon = 1e-15);
        assert_eq!(pre.delta, 0.0);
    }
}
