//! Empirical risk minimization for generalized linear models over compact
//! convex domains, with tools to measure the average stability of ERM and
//! check its invariance under data preconditioning.
//!
//! The crate is organised by layer:
//!
//! - [`glm`]: losses, datasets, domains, covariance summaries and preconditioners.
//! - [`solver`]: exact projections, certified constrained ERM and projected SGD.
//! - [`stability`]: average/uniform stability, condition-number bounds and the
//!   preconditioning invariance checker.
//! - [`experiments`]: seeded synthetic distributions and Monte Carlo studies.

pub mod error;
pub mod experiments;
pub mod glm;
pub mod linalg;
pub mod solver;
pub mod stability;

pub use error::{Error, Result};
pub use glm::covariance::{empirical_covariance, CovarianceSummary};
pub use glm::dataset::Dataset;
pub use glm::domain::{dual_domain, Domain, InstanceNorm, QuadForm};
pub use glm::loss::{
    exp_concavity_margin, functional_condition, loss_constants, loss_eval, ExpConcavityReport,
    LossFamily, LossKind, ScalarLoss,
};
pub use glm::precondition::{inverse_sqrt, optimal_preconditioner, precondition, Preconditioner};
pub use solver::{
    empirical_risk, erm_solve, erm_solve_with, loo_solve, project, sgd_solve, SgdConfig,
    SolveOptions, SolveResult, SolverMethod, StepRule,
};
pub use stability::{
    average_stability, average_stability_with, invariance_check, invariance_check_with,
    linear_regression_bound, preconditioned_bound, preconditioned_stability, stability_bound,
    uniform_stability_bound, InvarianceReport, StabilityReport,
};

/// Relative eigenvalue threshold (w.r.t. the largest eigenvalue) below which an
/// eigenvalue is treated as zero.
pub const RANK_TOL: f64 = 1e-10;
