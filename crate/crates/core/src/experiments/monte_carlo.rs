//! Monte Carlo estimates of risk, generalization gap, average stability and
//! excess risk over repeated training samples.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use super::distribution::{Distribution, DistributionSpec};
use super::rng::{stream_rng, Purpose};
use crate::error::{Error, Result};
use crate::glm::covariance::empirical_covariance;
use crate::glm::loss::{loss_eval, LossFamily};
use crate::solver::{empirical_risk, erm_solve_with, SolveOptions};
use crate::stability::{
    average_stability, linear_regression_bound, preconditioned_bound, stability_bound,
};

/// Size mismatch caveat attached to every report.
pub const SIZE_NOTE: &str = "gap is evaluated on the n-sample ERM while the identity it is compared \
with pairs size-(n-1) minimisers with size-n samples; the mismatch is O(1/n)";

#[derive(Debug, Clone, Copy)]
pub struct McOptions {
    /// Fresh samples per risk estimate.
    pub m_test: usize,
    /// The reference minimiser is fitted on `reference_factor · n` samples.
    pub reference_factor: usize,
    /// Stream grid index, so rows of a grid use disjoint streams.
    pub grid_index: u16,
}

impl Default for McOptions {
    fn default() -> Self {
        Self { m_test: 100_000, reference_factor: 50, grid_index: 0 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct McReport {
    pub trials: usize,
    pub n: usize,
    pub d: usize,
    pub mean_gap: f64,
    pub se_gap: f64,
    pub mean_delta: f64,
    pub se_delta: f64,
    pub mean_excess: f64,
    pub se_excess: f64,
    pub bound_preconditioned: f64,
    pub bound_unpreconditioned_mean: f64,
    pub kappa_mean: f64,
    /// Trials with `Δ(S) > bound_avg + numeric_slack`.
    pub bound_violations: usize,
    pub max_numeric_slack: f64,
    pub all_converged: bool,
    pub note: String,
}

/// Sample mean and its standard error `stdev / √m` (unbiased variance).
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let m = values.len();
    if m == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mut sum = 0.0;
    for v in values {
        sum += v;
    }
    let mean = sum / m as f64;
    if m == 1 {
        return (mean, 0.0);
    }
    let mut ss = 0.0;
    for v in values {
        ss += (v - mean) * (v - mean);
    }
    (mean, (ss / (m - 1) as f64).sqrt() / (m as f64).sqrt())
}

/// Checked per-sample losses of `w` on `(x, y)`.
pub(crate) fn losses(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    family: &LossFamily,
    w: &DVector<f64>,
) -> Result<Vec<f64>> {
    let z = x * w;
    (0..z.len()).map(|i| Ok(loss_eval(family, y[i], z[i])?.0)).collect()
}

/// Bound the excess-risk rows are compared with: `4Y²d/n` for the square
/// loss, `2ρ²d/(αn)` otherwise.
pub fn experiment_bound(spec: &DistributionSpec, family: &LossFamily, n: usize) -> f64 {
    if family.is_square() {
        linear_regression_bound(spec.cap_y, spec.d, n)
    } else {
        preconditioned_bound(family.rho(), family.alpha(), spec.d, n)
    }
}

/// Monte Carlo estimate of `L(w)` with its standard error, from `m_test`
/// fresh samples on the test stream of `seed`.
pub fn estimate_risk(
    spec: &DistributionSpec,
    family: &LossFamily,
    w: &DVector<f64>,
    m_test: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if m_test < 1000 {
        return Err(Error::Argument(format!("m_test must be at least 1000, got {m_test}")));
    }
    if w.len() != spec.d {
        return Err(Error::Argument(format!("w has length {}, expected {}", w.len(), spec.d)));
    }
    let dist = Distribution::new(spec)?;
    let (x, y) = dist.sample(&mut stream_rng(seed, Purpose::Test, 0, 0), m_test);
    Ok(mean_se(&losses(&x, &y, family, w)?))
}

/// Reference minimiser fitted on an independent sample of `factor · n`.
pub(crate) fn reference_minimizer(
    dist: &Distribution,
    n: usize,
    factor: usize,
    seed: u64,
    grid: u16,
) -> Result<DVector<f64>> {
    let mut rng = stream_rng(seed, Purpose::Reference, grid, 0);
    let big = dist.dataset(&mut rng, (factor * n).max(2))?;
    let r = erm_solve_with(&big, dist.family(), dist.domain(), &SolveOptions::default(), None)?;
    Ok(r.w_hat)
}

struct Trial {
    gap: f64,
    delta: f64,
    excess: f64,
    kappa: f64,
    bound_avg: f64,
    violation: bool,
    slack: f64,
    converged: bool,
}

/// Draws `trials` training samples of size `n` and, for each, measures
/// `Δ(S)`, the gap `L(ŵ) − L̂(ŵ)` and the excess `L(ŵ) − L(w_ref)`.
///
/// Both risks of a trial are estimated on the same fresh test sample.
/// `w_ref` is fitted once per call on `50 n` independent samples.
pub fn monte_carlo_gap(
    spec: &DistributionSpec,
    n: usize,
    trials: usize,
    tol: f64,
    seed: u64,
) -> Result<McReport> {
    monte_carlo_gap_with(spec, n, trials, tol, seed, &McOptions::default())
}

pub fn monte_carlo_gap_with(
    spec: &DistributionSpec,
    n: usize,
    trials: usize,
    tol: f64,
    seed: u64,
    opts: &McOptions,
) -> Result<McReport> {
    let dist = Distribution::new(spec)?;
    run(&dist, n, trials, tol, seed, opts)
}

pub(crate) fn check_trials(trials: usize, n: usize, m_test: usize) -> Result<()> {
    if trials < 30 {
        return Err(Error::Argument(format!("need at least 30 trials, got {trials}")));
    }
    if n < 2 {
        return Err(Error::Argument(format!("need n ≥ 2, got {n}")));
    }
    if m_test < 1000 {
        return Err(Error::Argument(format!("m_test must be at least 1000, got {m_test}")));
    }
    Ok(())
}

fn run(
    dist: &Distribution,
    n: usize,
    trials: usize,
    tol: f64,
    seed: u64,
    opts: &McOptions,
) -> Result<McReport> {
    check_trials(trials, n, opts.m_test)?;
    let grid = opts.grid_index;
    let family = dist.family();
    let domain = dist.domain();
    let w_ref = reference_minimizer(dist, n, opts.reference_factor, seed, grid)?;

    let outcomes = (0..trials as u64)
        .into_par_iter()
        .map(|t| -> Result<Trial> {
            let sample = dist.dataset(&mut stream_rng(seed, Purpose::Train, grid, t), n)?;
            let report = average_stability(&sample, family, domain, tol)?;
            let w_hat = DVector::from_column_slice(&report.w_hat);
            let train_risk = empirical_risk(&sample, family, &w_hat)?.0;
            let (tx, ty) = dist.sample(&mut stream_rng(seed, Purpose::Test, grid, t), opts.m_test);
            let (risk, _) = mean_se(&losses(&tx, &ty, family, &w_hat)?);
            let (risk_ref, _) = mean_se(&losses(&tx, &ty, family, &w_ref)?);
            Ok(Trial {
                gap: risk - train_risk,
                delta: report.delta,
                excess: risk - risk_ref,
                kappa: report.kappa_c,
                bound_avg: report.bound_avg,
                violation: report.delta > report.bound_avg + report.numeric_slack,
                slack: report.numeric_slack,
                converged: report.converged,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let column = |f: fn(&Trial) -> f64| -> Vec<f64> { outcomes.iter().map(f).collect() };
    let (mean_gap, se_gap) = mean_se(&column(|t| t.gap));
    let (mean_delta, se_delta) = mean_se(&column(|t| t.delta));
    let (mean_excess, se_excess) = mean_se(&column(|t| t.excess));
    let spec = dist.spec();
    Ok(McReport {
        trials,
        n,
        d: spec.d,
        mean_gap,
        se_gap,
        mean_delta,
        se_delta,
        mean_excess,
        se_excess,
        bound_preconditioned: experiment_bound(spec, family, n),
        bound_unpreconditioned_mean: mean_se(&column(|t| t.bound_avg)).0,
        kappa_mean: mean_se(&column(|t| t.kappa)).0,
        bound_violations: outcomes.iter().filter(|t| t.violation).count(),
        max_numeric_slack: outcomes.iter().map(|t| t.slack).fold(0.0, f64::max),
        all_converged: outcomes.iter().all(|t| t.converged),
        note: SIZE_NOTE.to_string(),
    })
}

/// One [`monte_carlo_gap`] row per `n`, each on its own stream grid index.
pub fn excess_risk_experiment(
    spec: &DistributionSpec,
    n_grid: &[usize],
    trials: usize,
    tol: f64,
    seed: u64,
) -> Result<Vec<McReport>> {
    excess_risk_experiment_with(spec, n_grid, trials, tol, seed, &McOptions::default())
}

pub fn excess_risk_experiment_with(
    spec: &DistributionSpec,
    n_grid: &[usize],
    trials: usize,
    tol: f64,
    seed: u64,
    opts: &McOptions,
) -> Result<Vec<McReport>> {
    let dist = Distribution::new(spec)?;
    n_grid
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let grid_index = u16::try_from(k)
                .map_err(|_| Error::Argument("n_grid has more than 65536 entries".into()))?;
            run(&dist, n, trials, tol, seed, &McOptions { grid_index, ..*opts })
        })
        .collect()
}

/// `2ρ²κ(Ĉ)/(αn)` averaged over `trials` training samples, without solving.
pub fn mean_unpreconditioned_bound(
    spec: &DistributionSpec,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    let dist = Distribution::new(spec)?;
    let family = dist.family();
    let mut total = 0.0;
    for t in 0..trials as u64 {
        let sample = dist.dataset(&mut stream_rng(seed, Purpose::Train, 0, t), n)?;
        let cov = empirical_covariance(&sample)?;
        total += stability_bound(&cov, family.rho(), family.alpha(), n);
    }
    Ok(total / trials as f64)
}
