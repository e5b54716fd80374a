//! Scalar losses `φ_y(z)` of a generalized linear model and their certified
//! Lipschitz (`rho`) and strong-convexity (`alpha`) constants.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};

/// Absolute widening applied to interval checks, scaled by `max(1, |bound|)`.
pub const INTERVAL_SLACK: f64 = 1e-9;

/// A user-supplied scalar loss.
pub trait ScalarLoss: Send + Sync + fmt::Debug {
    /// Returns `(φ_y(z), φ_y'(z), φ_y''(z))`.
    fn eval(&self, y: f64, z: f64) -> (f64, f64, f64);
}

#[derive(Clone, Debug)]
pub enum LossKind {
    /// `½(z − y)²`
    Square,
    /// `log(1 + exp(−yz))` with `y ∈ {−1, +1}`
    BoundedLogistic,
    Custom(Arc<dyn ScalarLoss>),
}

impl LossKind {
    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Square => "square",
            LossKind::BoundedLogistic => "bounded_logistic",
            LossKind::Custom(_) => "custom",
        }
    }
}

/// A loss together with the label range and prediction interval over which
/// `|φ'| ≤ rho` and `φ'' ≥ alpha` hold.
#[derive(Clone, Debug)]
pub struct LossFamily {
    kind: LossKind,
    label_bound: f64,
    prediction_interval: (f64, f64),
    rho: f64,
    alpha: f64,
}

pub(crate) fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn widen(bound: f64) -> f64 {
    INTERVAL_SLACK * bound.abs().max(1.0)
}

/// Certified `(rho, alpha)` for the built-in families on `[-cap_y, cap_y]`.
pub fn loss_constants(kind: &LossKind, cap_y: f64) -> Result<(f64, f64)> {
    if !(cap_y > 0.0) || !cap_y.is_finite() {
        return Err(Error::Argument(format!(
            "cap_Y must be positive and finite, got {cap_y} (degenerate prediction interval)"
        )));
    }
    match kind {
        LossKind::Square => Ok((2.0 * cap_y, 1.0)),
        LossKind::BoundedLogistic => {
            let s = sigmoid(cap_y);
            Ok((1.0, s * (1.0 - s)))
        }
        LossKind::Custom(_) => Err(Error::MissingConstants),
    }
}

/// `κ(φ) = rho² / alpha`.
pub fn functional_condition(rho: f64, alpha: f64) -> Result<f64> {
    if !(rho > 0.0 && alpha > 0.0) {
        return Err(Error::Argument(format!(
            "rho and alpha must be positive, got rho={rho}, alpha={alpha}"
        )));
    }
    Ok(rho * rho / alpha)
}

impl LossFamily {
    /// Square loss with labels and predictions in `[-cap_y, cap_y]`.
    pub fn square(cap_y: f64) -> Result<Self> {
        Self::builtin(LossKind::Square, cap_y)
    }

    /// Logistic loss with labels `±1` and predictions in `[-cap_y, cap_y]`.
    pub fn bounded_logistic(cap_y: f64) -> Result<Self> {
        Self::builtin(LossKind::BoundedLogistic, cap_y)
    }

    pub fn builtin(kind: LossKind, cap_y: f64) -> Result<Self> {
        let (rho, alpha) = loss_constants(&kind, cap_y)?;
        let label_bound = match kind {
            LossKind::BoundedLogistic => 1.0,
            _ => cap_y,
        };
        Ok(Self {
            kind,
            label_bound,
            prediction_interval: (-cap_y, cap_y),
            rho,
            alpha,
        })
    }

    /// A custom loss; the supplied constants are checked on a dense grid and
    /// rejected if any point violates them.
    pub fn custom(
        loss: Arc<dyn ScalarLoss>,
        label_bound: f64,
        prediction_interval: (f64, f64),
        rho: f64,
        alpha: f64,
    ) -> Result<Self> {
        let (lo, hi) = prediction_interval;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Argument(format!(
                "prediction interval [{lo}, {hi}] has empty interior"
            )));
        }
        if !(label_bound >= 0.0) {
            return Err(Error::Argument(format!("label bound {label_bound} is negative")));
        }
        functional_condition(rho, alpha)?;
        let family = Self {
            kind: LossKind::Custom(loss),
            label_bound,
            prediction_interval,
            rho,
            alpha,
        };
        family.certify(200)?;
        Ok(family)
    }

    pub fn kind(&self) -> &LossKind {
        &self.kind
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Labels must lie in `[-label_bound, label_bound]`.
    pub fn label_bound(&self) -> f64 {
        self.label_bound
    }

    pub fn prediction_interval(&self) -> (f64, f64) {
        self.prediction_interval
    }

    pub fn is_square(&self) -> bool {
        matches!(self.kind, LossKind::Square)
    }

    pub fn admits_label(&self, y: f64) -> bool {
        match self.kind {
            LossKind::BoundedLogistic => y == 1.0 || y == -1.0,
            _ => y.is_finite() && y.abs() <= self.label_bound + widen(self.label_bound),
        }
    }

    pub fn admits_prediction(&self, z: f64) -> bool {
        let (lo, hi) = self.prediction_interval;
        z.is_finite() && z >= lo - widen(lo) && z <= hi + widen(hi)
    }

    /// `(φ_y(z), φ_y'(z), φ_y''(z))` without range checks.
    #[inline]
    pub(crate) fn eval_unchecked(&self, y: f64, z: f64) -> (f64, f64, f64) {
        match &self.kind {
            LossKind::Square => {
                let r = z - y;
                (0.5 * r * r, r, 1.0)
            }
            LossKind::BoundedLogistic => {
                let m = -y * z;
                let s = sigmoid(z);
                (softplus(m), -y * sigmoid(m), s * (1.0 - s))
            }
            LossKind::Custom(loss) => loss.eval(y, z),
        }
    }

    /// Label samples used by grid checks.
    fn label_grid(&self, grid_size: usize) -> Vec<f64> {
        match self.kind {
            LossKind::BoundedLogistic => vec![-1.0, 1.0],
            _ => linspace(-self.label_bound, self.label_bound, grid_size),
        }
    }

    /// Verifies `|φ'| ≤ rho` and `φ'' ≥ alpha` on a `grid_size`-point grid
    /// of the prediction interval for each label sample.
    pub fn certify(&self, grid_size: usize) -> Result<()> {
        let (lo, hi) = self.prediction_interval;
        for y in self.label_grid(grid_size) {
            for z in linspace(lo, hi, grid_size) {
                let (v, d1, d2) = self.eval_unchecked(y, z);
                if !(v.is_finite() && d1.is_finite() && d2.is_finite()) {
                    return Err(Error::Uncertified(format!("non-finite value at y={y}, z={z}")));
                }
                if d1.abs() > self.rho + 1e-12 {
                    return Err(Error::Uncertified(format!(
                        "|φ'({z})| = {} exceeds rho = {} at y={y}",
                        d1.abs(),
                        self.rho
                    )));
                }
                if d2 < self.alpha - 1e-12 {
                    return Err(Error::Uncertified(format!(
                        "φ''({z}) = {d2} below alpha = {} at y={y}",
                        self.alpha
                    )));
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![0.5 * (lo + hi)],
        _ => {
            let step = (hi - lo) / (n - 1) as f64;
            (0..n)
                .map(|k| if k == n - 1 { hi } else { lo + step * k as f64 })
                .collect()
        }
    }
}

/// Evaluates the loss and its first two derivatives, rejecting labels or
/// predictions outside the family's certified ranges.
pub fn loss_eval(family: &LossFamily, y: f64, z: f64) -> Result<(f64, f64, f64)> {
    if !family.admits_label(y) {
        return Err(Error::InvalidLabel { y });
    }
    if !family.admits_prediction(z) {
        let (lo, hi) = family.prediction_interval;
        return Err(Error::OutOfRange { z, lo, hi });
    }
    Ok(family.eval_unchecked(y, z))
}

/// Result of the grid check `φ''(z) − ᾱ φ'(z)² ≥ 0`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ExpConcavityReport {
    pub alpha_bar: f64,
    pub min_margin: f64,
    pub pass: bool,
}

/// Checks `ᾱ`-exp-concavity with `ᾱ = alpha / rho²`.
///
/// For `w ↦ φ_y(wᵀx)` the Hessian is `φ'' xxᵀ` and the gradient outer
/// product is `φ'² xxᵀ`, so the matrix inequality reduces to the scalar
/// margin checked here.
pub fn exp_concavity_margin(family: &LossFamily, grid_size: usize) -> Result<ExpConcavityReport> {
    let alpha_bar = family.alpha / (family.rho * family.rho);
    exp_concavity_margin_with(family, alpha_bar, grid_size)
}

/// Same as [`exp_concavity_margin`] with an explicit `ᾱ`.
pub fn exp_concavity_margin_with(
    family: &LossFamily,
    alpha_bar: f64,
    grid_size: usize,
) -> Result<ExpConcavityReport> {
    if grid_size < 100 {
        return Err(Error::Argument(format!("grid_size must be at least 100, got {grid_size}")));
    }
    if !(alpha_bar >= 0.0) {
        return Err(Error::Argument(format!("alpha_bar must be nonnegative, got {alpha_bar}")));
    }
    let (lo, hi) = family.prediction_interval;
    let zs = linspace(lo, hi, grid_size);
    let mut min_margin = f64::INFINITY;
    for y in family.label_grid(grid_size) {
        for &z in &zs {
            let (_, d1, d2) = family.eval_unchecked(y, z);
            min_margin = min_margin.min(d2 - alpha_bar * d1 * d1);
        }
    }
    Ok(ExpConcavityReport {
        alpha_bar,
        min_margin,
        pass: min_margin >= -1e-12,
    })
}
