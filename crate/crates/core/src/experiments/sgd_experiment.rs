//! Average stability of projected SGD used as an approximate ERM.

use nalgebra::DVector;
use rand::RngCore;
use rayon::prelude::*;
use serde::Serialize;

use super::distribution::{Distribution, DistributionSpec};
use super::monte_carlo::{check_trials, losses, mean_se, reference_minimizer, McOptions};
use super::rng::{stream_rng, Purpose};
use crate::error::Result;
use crate::glm::covariance::empirical_covariance;
use crate::solver::{empirical_risk, erm_solve_with, sgd_run, sgd_solve_against, SgdConfig, SolveOptions};
use crate::stability::{delta_values, mean_in_order, preconditioned_bound, stability_bound};

#[derive(Debug, Clone, Serialize)]
pub struct SgdReport {
    pub trials: usize,
    pub n: usize,
    pub d: usize,
    /// `Δ` computed with SGD outputs in place of exact minimisers.
    pub mean_delta: f64,
    pub se_delta: f64,
    pub mean_gap: f64,
    pub se_gap: f64,
    pub mean_excess: f64,
    pub se_excess: f64,
    /// Measured `L̂(w_sgd) − min L̂` on the full sample.
    pub measured_eps_mean: f64,
    pub measured_eps_max: f64,
    pub mean_delta_plus_eps: f64,
    pub se_delta_plus_eps: f64,
    /// Mean over trials of `max_i 2ρ²‖x_i‖²/(γn)`, `γ = αλ_min⁺(Ĉ)`.
    pub hardt_style_bound: f64,
    /// `2ρ²d/(αn)`
    pub preconditioned_bound: f64,
    pub bound_unpreconditioned_mean: f64,
    pub kappa_mean: f64,
    /// Minimum over trials of `hardt_t / (preconditioned_bound · κ_t/(4d))`.
    pub min_inflation_ratio: f64,
    pub gamma_mean: f64,
}

struct Trial {
    delta: f64,
    eps: f64,
    gap: f64,
    excess: f64,
    hardt: f64,
    kappa: f64,
    bound_avg: f64,
    gamma: f64,
}

/// Runs SGD on `trials` training samples. For each trial the step
/// parameter `γ` is re-estimated as `αλ_min⁺(Ĉ)` of that sample, SGD's
/// seed is drawn from the trial's SGD stream, and the same seed is reused
/// for the `n` leave-one-out runs.
pub fn sgd_stability_experiment(
    spec: &DistributionSpec,
    n: usize,
    config: &SgdConfig,
    trials: usize,
    seed: u64,
) -> Result<SgdReport> {
    sgd_stability_experiment_with(spec, n, config, trials, seed, &McOptions::default())
}

pub fn sgd_stability_experiment_with(
    spec: &DistributionSpec,
    n: usize,
    config: &SgdConfig,
    trials: usize,
    seed: u64,
    opts: &McOptions,
) -> Result<SgdReport> {
    check_trials(trials, n, opts.m_test)?;
    let dist = Distribution::new(spec)?;
    let family = dist.family();
    let domain = dist.domain();
    let (rho, alpha) = (family.rho(), family.alpha());
    let grid = opts.grid_index;
    let d = spec.d;
    let precond = preconditioned_bound(rho, alpha, d, n);
    let w_ref = reference_minimizer(&dist, n, opts.reference_factor, seed, grid)?;

    let outcomes = (0..trials as u64)
        .into_par_iter()
        .map(|t| -> Result<Trial> {
            let sample = dist.dataset(&mut stream_rng(seed, Purpose::Train, grid, t), n)?;
            let cov = empirical_covariance(&sample)?;
            let gamma = alpha * cov.lambda_min_nonzero;
            let cfg = SgdConfig {
                gamma: if gamma > 0.0 { gamma } else { config.gamma },
                seed: stream_rng(seed, Purpose::Sgd, grid, t).next_u64(),
                ..*config
            };
            let exact = erm_solve_with(&sample, family, domain, &SolveOptions::default(), None)?;
            let full = sgd_solve_against(&sample, family, domain, &cfg, exact.objective)?;
            let loo = (0..n)
                .map(|i| sgd_run(&sample.without(i)?, family, domain, &cfg))
                .collect::<Result<Vec<DVector<f64>>>>()?;
            let delta = mean_in_order(&delta_values(&sample, family, &full.w_hat, loo.iter()));
            let train_risk = empirical_risk(&sample, family, &full.w_hat)?.0;
            let (tx, ty) = dist.sample(&mut stream_rng(seed, Purpose::Test, grid, t), opts.m_test);
            let (risk, _) = mean_se(&losses(&tx, &ty, family, &full.w_hat)?);
            let (risk_ref, _) = mean_se(&losses(&tx, &ty, family, &w_ref)?);
            let max_sq = cov.per_point_norms_sq.iter().cloned().fold(0.0, f64::max);
            Ok(Trial {
                delta,
                eps: full.certificate_eps,
                gap: risk - train_risk,
                excess: risk - risk_ref,
                hardt: 2.0 * rho * rho * max_sq / (cfg.gamma * n as f64),
                kappa: cov.kappa_c,
                bound_avg: stability_bound(&cov, rho, alpha, n),
                gamma: cfg.gamma,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let column = |f: fn(&Trial) -> f64| -> Vec<f64> { outcomes.iter().map(f).collect() };
    let (mean_delta, se_delta) = mean_se(&column(|t| t.delta));
    let (mean_gap, se_gap) = mean_se(&column(|t| t.gap));
    let (mean_excess, se_excess) = mean_se(&column(|t| t.excess));
    let (measured_eps_mean, _) = mean_se(&column(|t| t.eps));
    let (mean_delta_plus_eps, se_delta_plus_eps) = mean_se(&column(|t| t.delta + t.eps));
    let min_inflation_ratio = outcomes
        .iter()
        .map(|t| t.hardt / (precond * t.kappa / (4.0 * d as f64)))
        .fold(f64::INFINITY, f64::min);
    Ok(SgdReport {
        trials,
        n,
        d,
        mean_delta,
        se_delta,
        mean_gap,
        se_gap,
        mean_excess,
        se_excess,
        measured_eps_mean,
        measured_eps_max: outcomes.iter().map(|t| t.eps).fold(0.0, f64::max),
        mean_delta_plus_eps,
        se_delta_plus_eps,
        hardt_style_bound: mean_se(&column(|t| t.hardt)).0,
        preconditioned_bound: precond,
        bound_unpreconditioned_mean: mean_se(&column(|t| t.bound_avg)).0,
        kappa_mean: mean_se(&column(|t| t.kappa)).0,
        min_inflation_ratio,
        gamma_mean: mean_se(&column(|t| t.gamma)).0,
    })
}
