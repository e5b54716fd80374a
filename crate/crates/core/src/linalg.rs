//! Dense symmetric linear algebra shared by the rest of the crate.
//!
//! The symmetric eigendecomposition is the single factorization primitive:
//! covariance spectra, matrix square roots, ellipsoid projections and the
//! trust-region subproblem of the scaled solver all go through [`SymEigen`].

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigendecomposition `A = U diag(λ) Uᵀ` with eigenvalues sorted descending.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: DVector<f64>,
    /// Columns are orthonormal eigenvectors, ordered like `values`.
    pub vectors: DMatrix<f64>,
}

impl SymEigen {
    /// Decomposes the symmetric part of `a`.
    pub fn new(a: &DMatrix<f64>) -> Self {
        let sym = symmetrize(a);
        let eig = SymmetricEigen::new(sym);
        let d = eig.eigenvalues.len();
        let mut order: Vec<usize> = (0..d).collect();
        // total order with index tie-break keeps the result deterministic
        order.sort_by(|&i, &j| {
            eig.eigenvalues[j]
                .total_cmp(&eig.eigenvalues[i])
                .then(i.cmp(&j))
        });
        let values = DVector::from_iterator(d, order.iter().map(|&i| eig.eigenvalues[i]));
        let mut vectors = DMatrix::zeros(d, d);
        for (dst, &src) in order.iter().enumerate() {
            vectors.set_column(dst, &eig.eigenvectors.column(src));
        }
        Self { values, vectors }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn max(&self) -> f64 {
        if self.values.is_empty() {
            0.0
        } else {
            self.values[0]
        }
    }

    /// `U diag(f(λ)) Uᵀ`.
    pub fn spectral_map(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let d = self.dim();
        let mut scaled = self.vectors.clone();
        for j in 0..d {
            let s = f(self.values[j]);
            scaled.column_mut(j).scale_mut(s);
        }
        let out = &scaled * self.vectors.transpose();
        symmetrize(&out)
    }

    /// Number of eigenvalues at or above `tol · λ_max` (and strictly positive).
    pub fn rank(&self, tol: f64) -> usize {
        let cutoff = tol * self.max();
        self.values
            .iter()
            .filter(|&&v| v > 0.0 && v >= cutoff)
            .count()
    }
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// `‖A − Aᵀ‖_F / ‖A‖_F`, zero for the zero matrix.
pub fn relative_asymmetry(a: &DMatrix<f64>) -> f64 {
    let norm = a.norm();
    if norm == 0.0 {
        0.0
    } else {
        (a - a.transpose()).norm() / norm
    }
}

pub fn check_square(a: &DMatrix<f64>, what: &str) -> Result<()> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(Error::Argument(format!(
            "{what} must be a non-empty square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Argument(format!("{what} has non-finite entries")));
    }
    Ok(())
}

/// Trace over smallest nonzero eigenvalue; zero for a zero spectrum.
pub fn trace_condition(eigenvalues: &DVector<f64>, tol: f64) -> f64 {
    let lmax = eigenvalues.iter().cloned().fold(0.0, f64::max);
    let cutoff = tol * lmax;
    let lmin = eigenvalues
        .iter()
        .cloned()
        .filter(|&v| v > 0.0 && v >= cutoff)
        .fold(f64::INFINITY, f64::min);
    if !lmin.is_finite() {
        return 0.0;
    }
    eigenvalues.iter().sum::<f64>() / lmin
}

/// Finds `θ ≥ 0` with `Σ b_i² / (σ_i + θ)² = r²`.
///
/// Requires `σ_i > 0` and `Σ b_i²/σ_i² > r²` (the unconstrained point lies
/// outside the ball); returns `0` otherwise. This is the scalar equation
/// behind both the ellipsoid projection and the ball-constrained quadratic
/// subproblem. It is solved as `1/‖s(θ)‖ − 1/r = 0`, which is concave and
/// increasing in `θ`, so Newton iterates started at zero increase
/// monotonically; a bisection bracket guards against roundoff.
pub fn solve_secular(b: &[f64], sigma: &[f64], radius: f64) -> f64 {
    debug_assert_eq!(b.len(), sigma.len());
    let norm_at = |theta: f64| -> (f64, f64) {
        let mut sq = 0.0;
        let mut cube = 0.0;
        for (&bi, &si) in b.iter().zip(sigma) {
            let den = si + theta;
            let t = bi * bi / (den * den);
            sq += t;
            cube += t / den;
        }
        (sq.sqrt(), cube)
    };

    let (n0, _) = norm_at(0.0);
    if n0 <= radius {
        return 0.0;
    }
    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut lo = 0.0;
    let mut hi = bnorm / radius;
    let mut theta = 0.0;

    for _ in 0..200 {
        let (norm, cube) = norm_at(theta);
        if (norm - radius).abs() <= 1e-12 * radius {
            return theta;
        }
        if norm > radius {
            lo = theta;
        } else {
            hi = theta;
        }
        if hi - lo <= 1e-15 * hi.max(f64::MIN_POSITIVE) {
            return hi;
        }
        // ψ(θ) = 1/‖s‖ − 1/r, ψ'(θ) = Σ b²/(σ+θ)³ / ‖s‖³
        let psi = 1.0 / norm - 1.0 / radius;
        let dpsi = cube / (norm * norm * norm);
        let mut next = theta - psi / dpsi;
        if !next.is_finite() || next <= lo || next >= hi {
            next = 0.5 * (lo + hi);
        }
        theta = next;
    }
    // the bracket endpoint `hi` always satisfies ‖s‖ ≤ r
    hi
}
