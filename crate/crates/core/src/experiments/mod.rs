//! Seeded synthetic distributions and Monte Carlo studies of stability,
//! generalization gap and excess risk.

mod distribution;
mod monte_carlo;
pub mod rng;
mod sgd_experiment;

pub use distribution::{
    random_orthogonal, random_pd, synth_regression, Distribution, DistributionSpec, FamilyKind,
};
pub use monte_carlo::{
    estimate_risk, excess_risk_experiment, excess_risk_experiment_with, experiment_bound,
    mean_se, mean_unpreconditioned_bound, monte_carlo_gap, monte_carlo_gap_with, McOptions,
    McReport, SIZE_NOTE,
};
pub use sgd_experiment::{sgd_stability_experiment, sgd_stability_experiment_with, SgdReport};
