use nalgebra::{DMatrix, DVector};

use super::{project, SolveOptions, SolveResult, SolverMethod};
use crate::error::{Error, Result};
use crate::glm::covariance::{empirical_covariance, CovarianceSummary};
use crate::glm::dataset::Dataset;
use crate::glm::domain::Domain;
use crate::glm::loss::LossFamily;
use crate::linalg::{solve_secular, SymEigen};
use crate::RANK_TOL;

/// Halvings allowed per backtracking search.
const MAX_HALVINGS: usize = 60;

/// `L̂(w) = (1/n) Σ φ_{y_i}(wᵀx_i)` over one dataset, without range checks.
pub(crate) struct Objective<'a> {
    x: &'a DMatrix<f64>,
    y: &'a DVector<f64>,
    family: &'a LossFamily,
    inv_n: f64,
}

impl<'a> Objective<'a> {
    pub(crate) fn new(dataset: &'a Dataset, family: &'a LossFamily) -> Self {
        Self {
            x: dataset.x(),
            y: dataset.y(),
            family,
            inv_n: 1.0 / dataset.n() as f64,
        }
    }

    pub(crate) fn value(&self, w: &DVector<f64>) -> f64 {
        let z = self.x * w;
        let mut s = 0.0;
        for i in 0..z.len() {
            s += self.family.eval_unchecked(self.y[i], z[i]).0;
        }
        s * self.inv_n
    }

    pub(crate) fn value_grad(&self, w: &DVector<f64>) -> (f64, DVector<f64>) {
        let z = self.x * w;
        let mut s = 0.0;
        let mut coef = DVector::zeros(z.len());
        for i in 0..z.len() {
            let (v, d1, _) = self.family.eval_unchecked(self.y[i], z[i]);
            s += v;
            coef[i] = d1 * self.inv_n;
        }
        (s * self.inv_n, self.x.tr_mul(&coef))
    }

    /// `(1/n) Σ φ''(wᵀx_i) x_i x_iᵀ`
    fn hessian(&self, w: &DVector<f64>) -> DMatrix<f64> {
        let z = self.x * w;
        let mut weighted = self.x.clone();
        for i in 0..z.len() {
            let d2 = self.family.eval_unchecked(self.y[i], z[i]).2;
            weighted.row_mut(i).scale_mut(d2 * self.inv_n);
        }
        let h = self.x.tr_mul(&weighted);
        (&h + h.transpose()) * 0.5
    }

    fn max_curvature(&self, w: &DVector<f64>) -> f64 {
        let z = self.x * w;
        (0..z.len())
            .map(|i| self.family.eval_unchecked(self.y[i], z[i]).2)
            .fold(0.0, f64::max)
    }
}

fn check_labels(dataset: &Dataset, family: &LossFamily) -> Result<()> {
    match dataset.y().iter().find(|&&y| !family.admits_label(y)) {
        Some(&y) => Err(Error::InvalidLabel { y }),
        None => Ok(()),
    }
}

fn check_predictions(dataset: &Dataset, family: &LossFamily, w: &DVector<f64>) -> Result<()> {
    let z = dataset.predictions(w);
    match z.iter().position(|&zi| !family.admits_prediction(zi)) {
        Some(index) => {
            let (lo, hi) = family.prediction_interval();
            Err(Error::InfeasiblePrediction { index, z: z[index], lo, hi })
        }
        None => Ok(()),
    }
}

/// Value and gradient of the empirical risk, rejecting any prediction
/// outside the family's interval.
pub fn empirical_risk(
    dataset: &Dataset,
    family: &LossFamily,
    w: &DVector<f64>,
) -> Result<(f64, DVector<f64>)> {
    if w.len() != dataset.d() {
        return Err(Error::Argument(format!(
            "w has length {} but data has dimension {}",
            w.len(),
            dataset.d()
        )));
    }
    check_labels(dataset, family)?;
    check_predictions(dataset, family, w)?;
    Ok(Objective::new(dataset, family).value_grad(w))
}

/// Certified ERM from `project(domain, 0)`.
pub fn erm_solve(
    dataset: &Dataset,
    family: &LossFamily,
    domain: &Domain,
    tol: f64,
    max_iter: usize,
) -> Result<SolveResult> {
    erm_solve_with(dataset, family, domain, &SolveOptions::new(tol, max_iter), None)
}

/// Leave-one-out ERM on `S ∖ {(x_i, y_i)}`, weighted `1/(n−1)`.
pub fn loo_solve(
    dataset: &Dataset,
    family: &LossFamily,
    domain: &Domain,
    i: usize,
    opts: &SolveOptions,
    warm_start: Option<&DVector<f64>>,
) -> Result<SolveResult> {
    let reduced = dataset.without(i)?;
    erm_solve_with(&reduced, family, domain, opts, warm_start)
}

/// Certified ERM with explicit options and an optional starting point
/// (projected onto the domain first).
///
/// Every iteration ends with a projected gradient step `w⁺ = Π(w − t g)`
/// whose step `t` halves from `1/L̂` until
/// `L̂(w⁺) ≤ L̂(w) + gᵀ(w⁺ − w) + ‖w⁺ − w‖²/(2t)`; this implies the Armijo
/// condition with constant ½. With `G = (w − w⁺)/t`, the restricted strong
/// convexity `μ̂ = α λ_min⁺(Ĉ)` on the data span gives
/// `L̂(w⁺) − min L̂ ≤ ‖Π_span G‖² / (2μ̂)`, which is the certificate.
pub fn erm_solve_with(
    dataset: &Dataset,
    family: &LossFamily,
    domain: &Domain,
    opts: &SolveOptions,
    warm_start: Option<&DVector<f64>>,
) -> Result<SolveResult> {
    if !(opts.tol > 0.0) {
        return Err(Error::Argument(format!("tol must be positive, got {}", opts.tol)));
    }
    domain.check_dim(dataset.d())?;
    check_labels(dataset, family)?;
    let cov = empirical_covariance(dataset)?;
    let result = Solver::new(dataset, family, domain, opts, &cov)?.run(warm_start);
    check_predictions(dataset, family, &result.w_hat)?;
    Ok(result)
}

struct Solver<'a> {
    obj: Objective<'a>,
    domain: &'a Domain,
    opts: &'a SolveOptions,
    cov: &'a CovarianceSummary,
    mu: f64,
    scaled: bool,
}

/// Allowance for rounding in the sufficient-decrease test.
fn roundoff(f: f64, f_new: f64) -> f64 {
    16.0 * f64::EPSILON * (f.abs() + f_new.abs()) + f64::MIN_POSITIVE
}

impl<'a> Solver<'a> {
    fn new(
        dataset: &'a Dataset,
        family: &'a LossFamily,
        domain: &'a Domain,
        opts: &'a SolveOptions,
        cov: &'a CovarianceSummary,
    ) -> Result<Self> {
        let scaled = match opts.method {
            SolverMethod::ProjectedGradient => false,
            SolverMethod::Auto => domain.ellipsoid().is_some(),
            SolverMethod::ScaledProjectedGradient => {
                if domain.ellipsoid().is_none() {
                    return Err(Error::Argument(format!(
                        "scaled projected gradient needs an ellipsoidal domain, got {}",
                        domain.name()
                    )));
                }
                true
            }
        };
        Ok(Self {
            obj: Objective::new(dataset, family),
            domain,
            opts,
            cov,
            mu: family.alpha() * cov.lambda_min_nonzero,
            scaled,
        })
    }

    fn run(&self, warm_start: Option<&DVector<f64>>) -> SolveResult {
        let d = self.cov.dim();
        let mut w = match warm_start {
            Some(w0) if w0.len() == d => project(self.domain, w0),
            _ => project(self.domain, &DVector::zeros(d)),
        };
        let (mut f, mut g) = self.obj.value_grad(&w);
        let mut trace = Vec::new();
        if self.opts.record_trace {
            trace.push(f);
        }
        if self.cov.rank == 0 {
            // every x_i is zero: the objective is constant
            return SolveResult {
                w_hat: w,
                certificate_eps: 0.0,
                iterations: 0,
                objective: f,
                converged: true,
                mu_hat: 0.0,
                trace,
            };
        }
        let lipschitz = self.cov.lambda_max() * self.obj.max_curvature(&w);
        let step0 = if lipschitz > 0.0 { 1.0 / lipschitz } else { 1.0 };

        let mut eps = f64::INFINITY;
        let mut iterations = 0;
        while iterations < self.opts.max_iter {
            iterations += 1;
            if self.scaled {
                if let Some((w_n, f_n)) = self.newton_step(&w, f, &g) {
                    w = w_n;
                    f = f_n;
                    g = self.obj.value_grad(&w).1;
                    if self.opts.record_trace {
                        trace.push(f);
                    }
                }
            }
            let (w_next, f_next, step_eps) = self.gradient_step(&w, f, &g, step0);
            eps = step_eps;
            if let Some(w_next) = w_next {
                w = w_next;
                let (f_new, g_new) = self.obj.value_grad(&w);
                debug_assert!((f_new - f_next).abs() <= 1e-12 * (1.0 + f_new.abs()));
                f = f_new;
                g = g_new;
                if self.opts.record_trace {
                    trace.push(f);
                }
            }
            if eps <= self.opts.tol {
                break;
            }
        }
        SolveResult {
            w_hat: w,
            certificate_eps: eps,
            iterations,
            objective: f,
            converged: eps <= self.opts.tol,
            mu_hat: self.mu,
            trace,
        }
    }

    /// Backtracking projected gradient step. Returns the accepted point (or
    /// `None` if no step passed the test), its objective and the certificate
    /// for it.
    fn gradient_step(
        &self,
        w: &DVector<f64>,
        f: f64,
        g: &DVector<f64>,
        step0: f64,
    ) -> (Option<DVector<f64>>, f64, f64) {
        let mut t = step0;
        for _ in 0..=MAX_HALVINGS {
            let w_new = project(self.domain, &(w - g * t));
            let dw = &w_new - w;
            let f_new = self.obj.value(&w_new);
            let allowance = roundoff(f, f_new);
            if f_new <= f + g.dot(&dw) + dw.norm_squared() / (2.0 * t) + allowance {
                let grad_map = dw / t;
                let eps =
                    self.cov.project_onto_span(&grad_map).norm_squared() / (2.0 * self.mu) + allowance;
                return (Some(w_new), f_new, eps);
            }
            t *= 0.5;
        }
        (None, f, f64::INFINITY)
    }

    /// Minimises the local quadratic model `gᵀv + ½vᵀHv` over the ellipsoid
    /// `{w : wᵀAw ≤ r²}` and backtracks along the resulting direction.
    fn newton_step(
        &self,
        w: &DVector<f64>,
        f: f64,
        g: &DVector<f64>,
    ) -> Option<(DVector<f64>, f64)> {
        let (inv_sqrt, r) = self.domain.ellipsoid()?;
        let h = self.obj.hessian(w);
        // substitute v = A^{-1/2} s so the constraint becomes ‖s‖ ≤ r
        let m = match inv_sqrt {
            Some(s) => s * &h * s,
            None => h.clone(),
        };
        let c = &h * w - g;
        let sc = match inv_sqrt {
            Some(s) => s * &c,
            None => c,
        };
        let eig = SymEigen::new(&m);
        let cutoff = RANK_TOL * eig.max();
        if !(eig.max() > 0.0) {
            return None;
        }
        let b_full = eig.vectors.transpose() * &sc;
        let kept: Vec<usize> = (0..eig.dim()).filter(|&k| eig.values[k] > cutoff).collect();
        let b: Vec<f64> = kept.iter().map(|&k| b_full[k]).collect();
        let sigma: Vec<f64> = kept.iter().map(|&k| eig.values[k]).collect();
        let theta = solve_secular(&b, &sigma, r);
        let mut coords = DVector::zeros(eig.dim());
        for (j, &k) in kept.iter().enumerate() {
            coords[k] = b[j] / (sigma[j] + theta);
        }
        let s_norm = coords.norm();
        if s_norm > r {
            coords *= r / s_norm;
        }
        let s = &eig.vectors * coords;
        let v = match inv_sqrt {
            Some(a) => a * s,
            None => s,
        };
        let dir = v - w;
        let slope = g.dot(&dir);
        if !(slope < 0.0) {
            return None;
        }
        let mut tau = 1.0;
        for _ in 0..=MAX_HALVINGS {
            let cand = w + &dir * tau;
            let f_new = self.obj.value(&cand);
            if f_new <= f + 0.5 * tau * slope {
                return Some((cand, f_new));
            }
            tau *= 0.5;
        }
        None
    }
}
