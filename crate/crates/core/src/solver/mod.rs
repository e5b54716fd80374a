//! Constrained empirical risk minimization.
//!
//! [`erm_solve`] returns an iterate together with a certificate bounding its
//! suboptimality; [`sgd_solve`] runs projected SGD and measures its
//! suboptimality against a high-precision ERM solve.

mod erm;
mod project;
mod sgd;

use nalgebra::DVector;

pub use erm::{empirical_risk, erm_solve, erm_solve_with, loo_solve};
pub use project::project;
pub use sgd::{sgd_solve, SgdConfig, StepRule};
pub(crate) use sgd::{sgd_run, sgd_solve_against};

/// Outer iteration scheme of [`erm_solve`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolverMethod {
    /// Projected gradient descent with backtracking.
    ProjectedGradient,
    /// Each iteration takes a projected Newton step (a quadratic model
    /// minimised over the ellipsoid) followed by a projected gradient step.
    /// Only available for Euclidean and quadratic-form balls.
    ScaledProjectedGradient,
    /// Scaled for ellipsoidal domains, plain projected gradient otherwise.
    #[default]
    Auto,
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub method: SolverMethod,
    /// Keep the objective value after every accepted step.
    pub record_trace: bool,
}

impl SolveOptions {
    pub fn new(tol: f64, max_iter: usize) -> Self {
        Self { tol, max_iter, ..Self::default() }
    }

    pub fn with_method(mut self, method: SolverMethod) -> Self {
        self.method = method;
        self
    }
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100_000,
            method: SolverMethod::Auto,
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub w_hat: DVector<f64>,
    /// Upper bound on `L̂(ŵ) − min L̂` (measured, for SGD).
    pub certificate_eps: f64,
    pub iterations: usize,
    pub objective: f64,
    pub converged: bool,
    /// Strong-convexity modulus on the data span used by the certificate.
    pub mu_hat: f64,
    /// Objective after every accepted step, if requested.
    pub trace: Vec<f64>,
}
