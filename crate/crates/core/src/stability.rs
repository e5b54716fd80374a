//! Average stability of ERM, its condition-number bounds, and the check that
//! it is unchanged by preconditioning.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::glm::covariance::{empirical_covariance, CovarianceSummary};
use crate::glm::dataset::Dataset;
use crate::glm::domain::Domain;
use crate::glm::loss::LossFamily;
use crate::glm::precondition::{inverse_sqrt, precondition, Preconditioner};
use crate::solver::{erm_solve_with, loo_solve, SolveOptions, SolveResult};
use crate::RANK_TOL;

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    /// `Δ(S, W)`, the mean of `delta_i`.
    pub delta: f64,
    /// `φ_{y_i}(ŵ_iᵀx_i) − φ_{y_i}(ŵᵀx_i)`
    pub delta_i: Vec<f64>,
    /// `2ρ²κ(Ĉ)/(αn)`
    pub bound_avg: f64,
    /// `max_i 2ρ²‖x_i‖²/(nαλ_min⁺(Ĉ))`
    pub bound_uniform: f64,
    /// `2ρ² rank(Ĉ)/(αn)`
    pub bound_preconditioned: f64,
    pub solver_tol: f64,
    /// Bound on the error in `delta` caused by inexact solves.
    pub numeric_slack: f64,
    /// False if any of the `n + 1` solves stopped at `max_iter`.
    pub converged: bool,
    /// Largest certificate among the `n + 1` solves.
    pub max_certificate: f64,
    pub kappa_c: f64,
    pub rank: usize,
    pub n: usize,
    pub d: usize,
    pub w_hat: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct InvarianceReport {
    pub delta_original: f64,
    pub delta_preconditioned: f64,
    pub abs_diff: f64,
    pub tolerance_used: f64,
    pub pass: bool,
    pub kappa_before: f64,
    pub kappa_after: f64,
    /// `max_i |Δ_i(S_P) − Δ_i(S)|`
    pub max_index_diff: f64,
    /// Per-index values are compared only when `Ĉ` has full rank.
    pub per_index_checked: bool,
    /// `max_index_diff ≤ 10 · tolerance_used`, or true when unchecked.
    pub per_index_pass: bool,
    /// Condition number of `P`.
    pub p_condition: f64,
}

/// `2ρ²κ(Ĉ)/(αn)`
pub fn stability_bound(cov: &CovarianceSummary, rho: f64, alpha: f64, n: usize) -> f64 {
    2.0 * rho * rho * cov.kappa_c / (alpha * n as f64)
}

/// `2ρ² · effective_dim/(αn)`
pub fn preconditioned_bound(rho: f64, alpha: f64, effective_dim: usize, n: usize) -> f64 {
    2.0 * rho * rho * effective_dim as f64 / (alpha * n as f64)
}

/// `4Y²d/n`, the square-loss specialisation quoted for linear regression
/// with labels and predictions in `[-Y, Y]`.
pub fn linear_regression_bound(cap_y: f64, dim: usize, n: usize) -> f64 {
    4.0 * cap_y * cap_y * dim as f64 / n as f64
}

/// `max_i 2ρ²‖x_i‖² / (nαλ_min⁺(Ĉ))`; zero when every instance is zero.
pub fn uniform_stability_bound(dataset: &Dataset, rho: f64, alpha: f64) -> Result<f64> {
    let cov = empirical_covariance(dataset)?;
    Ok(uniform_bound_from(&cov, rho, alpha))
}

fn uniform_bound_from(cov: &CovarianceSummary, rho: f64, alpha: f64) -> f64 {
    if cov.rank == 0 {
        return 0.0;
    }
    let n = cov.per_point_norms_sq.len() as f64;
    let max_sq = cov.per_point_norms_sq.iter().cloned().fold(0.0, f64::max);
    2.0 * rho * rho * max_sq / (n * alpha * cov.lambda_min_nonzero)
}

/// Distance-to-minimiser propagation: an `ε`-suboptimal solve is within
/// `sqrt(2ε/μ)` of the minimiser on the data span, so each loss value moves
/// by at most `ρ · max‖x_i‖ · sqrt(2ε/μ)`; the factor 2 covers both solves.
fn numeric_slack(rho: f64, max_norm: f64, eps: f64, mu: f64) -> f64 {
    if max_norm == 0.0 {
        return 0.0;
    }
    if !(mu > 0.0) {
        return f64::INFINITY;
    }
    2.0 * rho * max_norm * (2.0 * eps / mu).sqrt()
}

/// `φ_{y_i}(w_iᵀx_i) − φ_{y_i}(wᵀx_i)` for each held-out index `i`.
pub(crate) fn delta_values<'a>(
    dataset: &Dataset,
    family: &LossFamily,
    full: &DVector<f64>,
    loo: impl Iterator<Item = &'a DVector<f64>>,
) -> Vec<f64> {
    let x = dataset.x();
    let y = dataset.y();
    loo.enumerate()
        .map(|(i, wi)| {
            let xi = x.row(i).transpose();
            let before = family.eval_unchecked(y[i], xi.dot(wi)).0;
            let after = family.eval_unchecked(y[i], xi.dot(full)).0;
            before - after
        })
        .collect()
}

pub(crate) fn mean_in_order(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    for v in values {
        sum += v;
    }
    sum / values.len() as f64
}

/// Builds the report from a full-sample solution and its `n` leave-one-out
/// solutions.
fn assemble_report(
    dataset: &Dataset,
    family: &LossFamily,
    cov: &CovarianceSummary,
    full: &SolveResult,
    loo: &[SolveResult],
    tol: f64,
) -> StabilityReport {
    let n = dataset.n();
    let delta_i = delta_values(dataset, family, &full.w_hat, loo.iter().map(|r| &r.w_hat));
    let delta = mean_in_order(&delta_i);

    let (rho, alpha) = (family.rho(), family.alpha());
    let max_certificate = loo
        .iter()
        .map(|r| r.certificate_eps)
        .fold(full.certificate_eps, f64::max);
    // solves on all-zero data have no curvature and no error to propagate
    let mu = std::iter::once(full)
        .chain(loo)
        .map(|r| r.mu_hat)
        .filter(|&m| m > 0.0)
        .fold(f64::INFINITY, f64::min);
    let converged = full.converged && loo.iter().all(|r| r.converged);
    StabilityReport {
        delta,
        delta_i,
        bound_avg: stability_bound(cov, rho, alpha, n),
        bound_uniform: uniform_bound_from(cov, rho, alpha),
        bound_preconditioned: preconditioned_bound(rho, alpha, cov.rank, n),
        solver_tol: tol,
        numeric_slack: numeric_slack(rho, dataset.max_instance_norm(), tol.max(max_certificate), mu),
        converged,
        max_certificate,
        kappa_c: cov.kappa_c,
        rank: cov.rank,
        n,
        d: dataset.d(),
        w_hat: full.w_hat.iter().copied().collect(),
    }
}

/// `Δ(S, W)` from one full-sample and `n` leave-one-out solves, each
/// certified to `tol`. The leave-one-out solves run in parallel and are
/// collected in index order.
///
/// `Δ_i` is determined by the data only when `x_i ∈ span(S∖i)`: otherwise the
/// leave-one-out minimisers differ along `x_i` and the solver's choice of
/// representative leaks into `φ(ŵ_iᵀx_i)`.
pub fn average_stability(
    dataset: &Dataset,
    family: &LossFamily,
    domain: &Domain,
    tol: f64,
) -> Result<StabilityReport> {
    average_stability_with(dataset, family, domain, &SolveOptions { tol, ..Default::default() })
}

pub fn average_stability_with(
    dataset: &Dataset,
    family: &LossFamily,
    domain: &Domain,
    opts: &SolveOptions,
) -> Result<StabilityReport> {
    let n = dataset.n();
    if n < 2 {
        return Err(Error::Argument(format!("average stability needs n ≥ 2, got {n}")));
    }
    let cov = empirical_covariance(dataset)?;
    let full = erm_solve_with(dataset, family, domain, opts, None)?;
    let loo = (0..n)
        .into_par_iter()
        .map(|i| loo_solve(dataset, family, domain, i, opts, Some(&full.w_hat)))
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble_report(dataset, family, &cov, &full, &loo, opts.tol))
}

/// Average stability of the preconditioned problem `(S_P, W_P)`.
pub fn preconditioned_stability(
    dataset: &Dataset,
    family: &LossFamily,
    domain: &Domain,
    pre: &Preconditioner,
    tol: f64,
) -> Result<StabilityReport> {
    let (ds_p, dom_p) = precondition(dataset, domain, pre)?;
    average_stability(&ds_p, family, &dom_p, tol)
}

fn compare(
    original: &StabilityReport,
    pre: &StabilityReport,
    p_condition: f64,
) -> InvarianceReport {
    let abs_diff = (original.delta - pre.delta).abs();
    let tolerance_used = original.numeric_slack + pre.numeric_slack + 1e-9;
    let max_index_diff = original
        .delta_i
        .iter()
        .zip(&pre.delta_i)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let per_index_checked = original.rank == original.d;
    InvarianceReport {
        delta_original: original.delta,
        delta_preconditioned: pre.delta,
        abs_diff,
        tolerance_used,
        pass: abs_diff <= tolerance_used,
        kappa_before: original.kappa_c,
        kappa_after: pre.kappa_c,
        max_index_diff,
        per_index_checked,
        per_index_pass: !per_index_checked || max_index_diff <= 10.0 * tolerance_used,
        p_condition,
    }
}

/// Compares `Δ(S, W)` with `Δ(S_P, W_P)` for every `P` in `p_list`.
pub fn invariance_check(
    dataset: &Dataset,
    family: &LossFamily,
    domain: &Domain,
    p_list: &[DMatrix<f64>],
    tol: f64,
) -> Result<Vec<InvarianceReport>> {
    let pres = p_list
        .iter()
        .map(|p| inverse_sqrt(p, RANK_TOL))
        .collect::<Result<Vec<_>>>()?;
    invariance_check_with(dataset, family, domain, &pres, tol)
}

/// As [`invariance_check`] with prebuilt preconditioners.
pub fn invariance_check_with(
    dataset: &Dataset,
    family: &LossFamily,
    domain: &Domain,
    pres: &[Preconditioner],
    tol: f64,
) -> Result<Vec<InvarianceReport>> {
    let original = average_stability(dataset, family, domain, tol)?;
    pres.iter()
        .map(|pre| {
            let report = preconditioned_stability(dataset, family, domain, pre, tol)?;
            Ok(compare(&original, &report, pre.condition_number()))
        })
        .collect()
}
