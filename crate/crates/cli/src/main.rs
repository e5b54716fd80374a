//! `glmstab`: generate synthetic data and run the stability experiments
//! from JSON configs. Each run writes `report.json` and `summary.csv` into
//! `--out` and prints PASS/FAIL lines.
//!
//! Exit codes: 0 on success, 1 on a runtime error or failed predicate,
//! 2 on an invalid config.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use config::{
    mc_options, resolve, ExcessConfig, GenConfig, InvarianceConfig, McConfig, SgdCliConfig,
    StabilityConfig,
};
use glmstab::experiments::{
    excess_risk_experiment_with, monte_carlo_gap_with, sgd_stability_experiment_with,
    synth_regression, Distribution, McReport,
};
use glmstab::{
    average_stability, empirical_covariance, invariance_check_with, Dataset, SgdConfig,
};

#[derive(Parser)]
#[command(name = "glmstab", version, about = "Stability of GLM empirical risk minimization under preconditioning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a synthetic dataset and write dataset.csv.
    Gen(Common),
    /// Average stability and bounds of ERM on a CSV dataset.
    Stability(Common),
    /// Check that Δ is unchanged by a list of preconditioners.
    Invariance(Common),
    /// Monte Carlo gap vs stability at one sample size.
    Mc(Common),
    /// Excess risk over a grid of sample sizes.
    Excess(Common),
    /// Stability of projected SGD used as approximate ERM.
    Sgd(Common),
}

#[derive(Args)]
struct Common {
    /// JSON config for the subcommand.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Solver certificate tolerance.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Worker threads: a positive integer or `auto`.
    #[arg(long, default_value = "auto")]
    threads: Threads,
}

#[derive(Clone, Copy, Debug)]
struct Threads(usize);

impl FromStr for Threads {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "auto" {
            return Ok(Threads(0));
        }
        match s.parse::<usize>() {
            Ok(k) if k > 0 => Ok(Threads(k)),
            _ => Err(format!("expected a positive integer or `auto`, got `{s}`")),
        }
    }
}

enum Failure {
    Config(anyhow::Error),
    Run(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Run(e)
    }
}

/// A finished command: what goes into the report and summary.
struct Outcome {
    result: Value,
    header: &'static [&'static str],
    rows: Vec<Vec<String>>,
    lines: Vec<(bool, String)>,
}

const EXPERIMENT_HEADER: &[&str] = &[
    "n", "trials", "mean_delta", "se_delta", "mean_gap", "se_gap", "mean_excess", "se_excess",
    "bound_precond", "bound_uncond", "pass",
];

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, common) = match &cli.command {
        Command::Gen(c) => ("gen", c),
        Command::Stability(c) => ("stability", c),
        Command::Invariance(c) => ("invariance", c),
        Command::Mc(c) => ("mc", c),
        Command::Excess(c) => ("excess", c),
        Command::Sgd(c) => ("sgd", c),
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(common.threads.0).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return ExitCode::from(1);
        }
    };
    match pool.install(|| run(name, common)) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Config(e)) => {
            eprintln!("invalid config: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn read_config<T: DeserializeOwned>(path: &Path) -> std::result::Result<(T, Value), Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::Config)?;
    let raw: Value = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(Failure::Config)?;
    let parsed = T::deserialize(&raw)
        .with_context(|| format!("in {}", path.display()))
        .map_err(Failure::Config)?;
    Ok((parsed, raw))
}

fn invalid(e: glmstab::Error) -> Failure {
    Failure::Config(e.into())
}

fn run(name: &str, common: &Common) -> std::result::Result<bool, Failure> {
    if !(common.tol > 0.0) || !common.tol.is_finite() {
        return Err(Failure::Config(anyhow::anyhow!("--tol must be positive, got {}", common.tol)));
    }
    let (outcome, raw) = match name {
        "gen" => {
            let (cfg, raw) = read_config::<GenConfig>(&common.config)?;
            (gen(&cfg, common)?, raw)
        }
        "stability" => {
            let (cfg, raw) = read_config::<StabilityConfig>(&common.config)?;
            (stability(&cfg, common)?, raw)
        }
        "invariance" => {
            let (cfg, raw) = read_config::<InvarianceConfig>(&common.config)?;
            (invariance(&cfg, common)?, raw)
        }
        "mc" => {
            let (cfg, raw) = read_config::<McConfig>(&common.config)?;
            (mc(&cfg, common)?, raw)
        }
        "excess" => {
            let (cfg, raw) = read_config::<ExcessConfig>(&common.config)?;
            (excess(&cfg, common)?, raw)
        }
        _ => {
            let (cfg, raw) = read_config::<SgdCliConfig>(&common.config)?;
            (sgd(&cfg, common)?, raw)
        }
    };
    let pass = outcome.lines.iter().all(|(ok, _)| *ok);
    let report = json!({
        "command": name,
        "timestamp": chrono::Utc::now().to_rfc3339(),
        "seed": common.seed,
        "tol": common.tol,
        "config": raw,
        "pass": pass,
        "result": outcome.result,
    });
    write_outputs(&common.out, &report, outcome.header, &outcome.rows)?;
    for (ok, line) in &outcome.lines {
        println!("{} {name}: {line}", if *ok { "PASS" } else { "FAIL" });
    }
    Ok(pass)
}

fn write_outputs(out: &Path, report: &Value, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let text = serde_json::to_string_pretty(report)?;
    fs::write(out.join("report.json"), text + "\n").context("writing report.json")?;
    let mut w = csv::Writer::from_path(out.join("summary.csv")).context("writing summary.csv")?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

fn load_dataset(config: &Path, path: &Path, cap_y: f64) -> Result<Dataset> {
    let path = resolve(config, path);
    Dataset::load_csv(&path, cap_y).with_context(|| format!("loading {}", path.display()))
}

fn gen(cfg: &GenConfig, common: &Common) -> std::result::Result<Outcome, Failure> {
    Distribution::new(&cfg.distribution).map_err(invalid)?;
    let ds = synth_regression(&cfg.distribution, cfg.n, common.seed).map_err(invalid)?;
    fs::create_dir_all(&common.out).with_context(|| format!("creating {}", common.out.display()))?;
    ds.save_csv(common.out.join("dataset.csv")).context("writing dataset.csv")?;
    let cov = empirical_covariance(&ds).context("summarising the sample")?;
    let result = json!({
        "n": ds.n(),
        "d": ds.d(),
        "kappa_c": cov.kappa_c,
        "rank": cov.rank,
        "lambda_min_nonzero": cov.lambda_min_nonzero,
        "max_instance_norm": ds.max_instance_norm(),
    });
    Ok(Outcome {
        result,
        header: &["n", "d", "kappa_c", "rank", "lambda_min_nonzero", "max_instance_norm"],
        rows: vec![vec![
            ds.n().to_string(),
            ds.d().to_string(),
            num(cov.kappa_c),
            cov.rank.to_string(),
            num(cov.lambda_min_nonzero),
            num(ds.max_instance_norm()),
        ]],
        lines: vec![(true, format!("wrote {} samples in dimension {} (κ(Ĉ) = {:.4})", ds.n(), ds.d(), cov.kappa_c))],
    })
}

fn stability(cfg: &StabilityConfig, common: &Common) -> std::result::Result<Outcome, Failure> {
    let family = cfg.loss.family(cfg.cap_y).map_err(invalid)?;
    let domain = cfg.domain.build().map_err(invalid)?;
    let ds = load_dataset(&common.config, &cfg.dataset, cfg.cap_y)?;
    let r = average_stability(&ds, &family, &domain, common.tol).context("measuring stability")?;
    let within = r.delta <= r.bound_avg + r.numeric_slack;
    let chain = r.bound_avg <= r.bound_uniform + 1e-12;
    let row = vec![
        r.n.to_string(),
        r.d.to_string(),
        num(r.delta),
        num(r.bound_avg),
        num(r.bound_uniform),
        num(r.bound_preconditioned),
        num(r.numeric_slack),
        r.converged.to_string(),
        (within && chain && r.converged).to_string(),
    ];
    let lines = vec![
        (within, format!("Δ = {:.6e} ≤ bound_avg + slack = {:.6e}", r.delta, r.bound_avg + r.numeric_slack)),
        (chain, format!("bound_avg = {:.6e} ≤ bound_uniform = {:.6e}", r.bound_avg, r.bound_uniform)),
        (r.converged, format!("all {} solves certified (max ε {:.2e})", r.n + 1, r.max_certificate)),
    ];
    Ok(Outcome {
        result: to_value(&r)?,
        header: &[
            "n", "d", "delta", "bound_avg", "bound_uniform", "bound_precond", "numeric_slack", "converged",
            "pass",
        ],
        rows: vec![row],
        lines,
    })
}

fn invariance(cfg: &InvarianceConfig, common: &Common) -> std::result::Result<Outcome, Failure> {
    let family = cfg.loss.family(cfg.cap_y).map_err(invalid)?;
    let domain = cfg.domain.build().map_err(invalid)?;
    let ds = load_dataset(&common.config, &cfg.dataset, cfg.cap_y)?;
    let cov = empirical_covariance(&ds).context("summarising the dataset")?;
    let mut labels = Vec::new();
    let mut pres = Vec::new();
    for (k, p) in cfg.preconditioners.iter().enumerate() {
        for (label, pre) in p.expand(k, &cov, common.seed).map_err(invalid)? {
            labels.push(label);
            pres.push(pre);
        }
    }
    let reports =
        invariance_check_with(&ds, &family, &domain, &pres, common.tol).context("checking invariance")?;
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for (k, (label, r)) in labels.iter().zip(&reports).enumerate() {
        let ok = r.pass && r.per_index_pass;
        rows.push(vec![
            k.to_string(),
            label.clone(),
            num(r.delta_original),
            num(r.delta_preconditioned),
            num(r.abs_diff),
            num(r.tolerance_used),
            num(r.kappa_before),
            num(r.kappa_after),
            ok.to_string(),
        ]);
        lines.push((
            ok,
            format!("#{k} {label}: |ΔP − Δ| = {:.2e} ≤ {:.2e}", r.abs_diff, r.tolerance_used),
        ));
    }
    if lines.is_empty() {
        lines.push((true, "no preconditioners listed".into()));
    }
    let result = json!({
        "labels": labels,
        "reports": to_value(&reports)?,
    });
    Ok(Outcome {
        result,
        header: &[
            "index", "label", "delta_original", "delta_preconditioned", "abs_diff", "tolerance_used",
            "kappa_before", "kappa_after", "pass",
        ],
        rows,
        lines,
    })
}

fn experiment_row(r: &McReport, pass: bool) -> Vec<String> {
    vec![
        r.n.to_string(),
        r.trials.to_string(),
        num(r.mean_delta),
        num(r.se_delta),
        num(r.mean_gap),
        num(r.se_gap),
        num(r.mean_excess),
        num(r.se_excess),
        num(r.bound_preconditioned),
        num(r.bound_unpreconditioned_mean),
        pass.to_string(),
    ]
}

fn mc(cfg: &McConfig, common: &Common) -> std::result::Result<Outcome, Failure> {
    Distribution::new(&cfg.distribution).map_err(invalid)?;
    let opts = mc_options(cfg.m_test, cfg.reference_factor);
    let r = monte_carlo_gap_with(&cfg.distribution, cfg.n, cfg.trials, common.tol, common.seed, &opts)
        .map_err(config_or_run)?;
    let diff = (r.mean_gap - r.mean_delta).abs();
    let limit = 3.0 * (r.se_gap + r.se_delta);
    let identity = diff <= limit;
    let bound = r.bound_violations == 0;
    let lines = vec![
        (identity, format!("|mean_gap − mean_delta| = {diff:.3e} ≤ 3(se_gap + se_delta) = {limit:.3e}")),
        (bound, format!("{} of {} trials with Δ above bound_avg + slack", r.bound_violations, r.trials)),
    ];
    Ok(Outcome {
        rows: vec![experiment_row(&r, identity && bound)],
        result: to_value(&r)?,
        header: EXPERIMENT_HEADER,
        lines,
    })
}

fn excess(cfg: &ExcessConfig, common: &Common) -> std::result::Result<Outcome, Failure> {
    Distribution::new(&cfg.distribution).map_err(invalid)?;
    let opts = mc_options(cfg.m_test, cfg.reference_factor);
    let rows = excess_risk_experiment_with(&cfg.distribution, &cfg.n_grid, cfg.trials, common.tol, common.seed, &opts)
        .map_err(config_or_run)?;
    let mut csv_rows = Vec::new();
    let mut lines = Vec::new();
    for r in &rows {
        let limit = r.bound_preconditioned + 3.0 * r.se_excess;
        let ok = r.mean_excess <= limit;
        csv_rows.push(experiment_row(r, ok));
        lines.push((ok, format!("n = {}: mean_excess = {:.3e} ≤ {:.3e}", r.n, r.mean_excess, limit)));
    }
    Ok(Outcome { result: to_value(&rows)?, header: EXPERIMENT_HEADER, rows: csv_rows, lines })
}

fn sgd(cfg: &SgdCliConfig, common: &Common) -> std::result::Result<Outcome, Failure> {
    Distribution::new(&cfg.distribution).map_err(invalid)?;
    let sgd_config = SgdConfig {
        passes: cfg.passes,
        step_rule: cfg.step_rule,
        gamma: cfg.gamma,
        seed: common.seed,
        averaging: cfg.averaging,
    };
    let opts = mc_options(cfg.m_test, cfg.reference_factor);
    let r = sgd_stability_experiment_with(&cfg.distribution, cfg.n, &sgd_config, cfg.trials, common.seed, &opts)
        .map_err(config_or_run)?;
    let limit = r.preconditioned_bound + 3.0 * r.se_delta_plus_eps;
    let ok = r.mean_delta_plus_eps <= limit;
    let row = vec![
        r.n.to_string(),
        r.trials.to_string(),
        num(r.mean_delta),
        num(r.se_delta),
        num(r.mean_gap),
        num(r.se_gap),
        num(r.mean_excess),
        num(r.se_excess),
        num(r.preconditioned_bound),
        num(r.bound_unpreconditioned_mean),
        ok.to_string(),
    ];
    let lines = vec![(
        ok,
        format!(
            "mean Δ_SGD + ε = {:.3e} ≤ {:.3e} (measured ε mean {:.2e}, Hardt-style bound {:.3e})",
            r.mean_delta_plus_eps, limit, r.measured_eps_mean, r.hardt_style_bound
        ),
    )];
    Ok(Outcome { result: to_value(&r)?, header: EXPERIMENT_HEADER, rows: vec![row], lines })
}

/// Argument errors from the experiment drivers (too few trials, bad grid)
/// stem from the config; everything else is a runtime failure.
fn config_or_run(e: glmstab::Error) -> Failure {
    match e {
        glmstab::Error::Argument(_) | glmstab::Error::Spec(_) => Failure::Config(e.into()),
        other => Failure::Run(other.into()),
    }
}
