//! JSON configuration files, one shape per subcommand. Unknown keys are
//! rejected everywhere.

use std::path::{Path, PathBuf};

use glmstab::experiments::rng::{stream_rng, Purpose};
use glmstab::experiments::{random_pd, DistributionSpec, McOptions};
use glmstab::{inverse_sqrt, optimal_preconditioner, CovarianceSummary, Domain, LossFamily, Preconditioner, StepRule, RANK_TOL};
use nalgebra::DMatrix;
use serde::Deserialize;

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossName {
    Square,
    BoundedLogistic,
}

impl LossName {
    pub fn family(self, cap_y: f64) -> glmstab::Result<LossFamily> {
        match self {
            LossName::Square => LossFamily::square(cap_y),
            LossName::BoundedLogistic => LossFamily::bounded_logistic(cap_y),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainConfig {
    EuclideanBall { radius: f64 },
    QuadBall { matrix: Vec<Vec<f64>>, radius: f64 },
    L1Ball { radius: f64 },
    Box { radius: f64 },
}

impl DomainConfig {
    pub fn build(&self) -> glmstab::Result<Domain> {
        match self {
            DomainConfig::EuclideanBall { radius } => Domain::euclidean_ball(*radius),
            DomainConfig::QuadBall { matrix, radius } => Domain::quad_ball(to_matrix(matrix)?, *radius),
            DomainConfig::L1Ball { radius } => Domain::l1_ball(*radius),
            DomainConfig::Box { radius } => Domain::box_ball(*radius),
        }
    }
}

fn to_matrix(rows: &[Vec<f64>]) -> glmstab::Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(glmstab::Error::Argument("matrix rows must be non-empty and of equal length".into()));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PreconditionerConfig {
    Identity,
    /// `Ĉ`, with null-space eigenvalues replaced by `delta` when rank deficient.
    Optimal {
        #[serde(default)]
        delta: f64,
    },
    Matrix { matrix: Vec<Vec<f64>> },
    /// `count` random SPD matrices with condition number `cond`.
    RandomPd { cond: f64, count: usize },
}

impl PreconditionerConfig {
    /// Expands into labelled preconditioners; random ones come from the
    /// auxiliary stream of `seed`, grid index = position in the list.
    pub fn expand(
        &self,
        position: usize,
        cov: &CovarianceSummary,
        seed: u64,
    ) -> glmstab::Result<Vec<(String, Preconditioner)>> {
        let d = cov.dim();
        Ok(match self {
            PreconditionerConfig::Identity => vec![("identity".into(), Preconditioner::identity(d))],
            PreconditionerConfig::Optimal { delta } => {
                vec![("optimal".into(), optimal_preconditioner(cov, *delta)?)]
            }
            PreconditionerConfig::Matrix { matrix } => {
                vec![("matrix".into(), inverse_sqrt(&to_matrix(matrix)?, RANK_TOL)?)]
            }
            PreconditionerConfig::RandomPd { cond, count } => {
                if !(*cond >= 1.0) || !cond.is_finite() {
                    return Err(glmstab::Error::Argument(format!("cond must be ≥ 1, got {cond}")));
                }
                let grid = u16::try_from(position)
                    .map_err(|_| glmstab::Error::Argument("too many preconditioner entries".into()))?;
                (0..*count as u64)
                    .map(|k| {
                        let mut rng = stream_rng(seed, Purpose::Auxiliary, grid, k);
                        let p = random_pd(&mut rng, d, *cond);
                        Ok((format!("random_pd(cond={cond})#{k}"), inverse_sqrt(&p, RANK_TOL)?))
                    })
                    .collect::<glmstab::Result<_>>()?
            }
        })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenConfig {
    pub distribution: DistributionSpec,
    pub n: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityConfig {
    /// CSV path, relative to the config file.
    pub dataset: PathBuf,
    pub cap_y: f64,
    pub loss: LossName,
    pub domain: DomainConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvarianceConfig {
    pub dataset: PathBuf,
    pub cap_y: f64,
    pub loss: LossName,
    pub domain: DomainConfig,
    pub preconditioners: Vec<PreconditionerConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub distribution: DistributionSpec,
    pub n: usize,
    pub trials: usize,
    pub m_test: Option<usize>,
    pub reference_factor: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExcessConfig {
    pub distribution: DistributionSpec,
    pub n_grid: Vec<usize>,
    pub trials: usize,
    pub m_test: Option<usize>,
    pub reference_factor: Option<usize>,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdCliConfig {
    pub distribution: DistributionSpec,
    pub n: usize,
    pub trials: usize,
    pub passes: usize,
    pub step_rule: StepRule,
    #[serde(default = "default_true")]
    pub averaging: bool,
    /// Only used when a sample has `λ_min⁺(Ĉ) = 0`.
    #[serde(default)]
    pub gamma: f64,
    pub m_test: Option<usize>,
    pub reference_factor: Option<usize>,
}

pub fn mc_options(m_test: Option<usize>, reference_factor: Option<usize>) -> McOptions {
    let base = McOptions::default();
    McOptions {
        m_test: m_test.unwrap_or(base.m_test),
        reference_factor: reference_factor.unwrap_or(base.reference_factor),
        ..base
    }
}

/// Resolves `path` against the directory holding the config file.
pub fn resolve(config_path: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        config_path.parent().unwrap_or(Path::new(".")).join(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = r#"{"kind": "euclidean_ball", "radius": 1.0, "extra": 2}"#;
        assert!(serde_json::from_str::<DomainConfig>(bad).is_err());
        let bad = r#"{"distribution": {"d": 1, "spectrum": [1.0], "w_star_direction": [1.0],
            "noise_sigma": 0.0, "cap_y": 1.0, "instance_norm": "l2", "instance_radius": 1.0,
            "family_kind": "square"}, "n": 5, "m": 3}"#;
        assert!(serde_json::from_str::<GenConfig>(bad).is_err());
    }

    #[test]
    fn domain_configs_build() {
        let q: DomainConfig =
            serde_json::from_str(r#"{"kind": "quad_ball", "matrix": [[2.0, 0.0], [0.0, 1.0]], "radius": 1.0}"#)
                .unwrap();
        assert_eq!(q.build().unwrap().name(), "quad_ball");
        let ragged = DomainConfig::QuadBall { matrix: vec![vec![1.0], vec![1.0, 2.0]], radius: 1.0 };
        assert!(ragged.build().is_err());
        assert!(DomainConfig::Box { radius: -1.0 }.build().is_err());
    }

    #[test]
    fn step_rules_parse() {
        let s: StepRule = serde_json::from_str(r#""inverse_strong_convexity""#).unwrap();
        assert_eq!(s, StepRule::InverseStrongConvexity);
        let s: StepRule = serde_json::from_str(r#"{"constant": 0.1}"#).unwrap();
        assert_eq!(s, StepRule::Constant(0.1));
    }

    #[test]
    fn relative_paths_follow_the_config() {
        let p = resolve(Path::new("/a/b/config.json"), Path::new("data.csv"));
        assert_eq!(p, PathBuf::from("/a/b/data.csv"));
        assert_eq!(resolve(Path::new("c.json"), Path::new("/x.csv")), PathBuf::from("/x.csv"));
    }
}
