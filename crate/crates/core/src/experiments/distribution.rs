//! Synthetic instance/label distributions with a prescribed second-moment
//! spectrum.
//!
//! An instance is `x = c · U · diag(√s) · g` with `g` uniform on the unit
//! sphere, `s` the spectrum, `U` the identity or a seeded random rotation,
//! and `c` the largest scale keeping every instance inside the instance
//! ball. Its second moment is `c² U diag(s) Uᵀ / d`.
//!
//! Square-loss labels are `clamp(w*ᵀx + σ ξ, −Y, Y)` with `ξ` standard
//! normal. Logistic labels are `+1` with probability `sigmoid(w*ᵀx)` and
//! `−1` otherwise.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::rng::{stream_rng, Purpose};
use crate::error::{Error, Result};
use crate::glm::dataset::Dataset;
use crate::glm::domain::{dual_domain, Domain, InstanceNorm};
use crate::glm::loss::{sigmoid, LossFamily, LossKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    Square,
    BoundedLogistic,
}

impl FamilyKind {
    pub fn loss_kind(self) -> LossKind {
        match self {
            FamilyKind::Square => LossKind::Square,
            FamilyKind::BoundedLogistic => LossKind::BoundedLogistic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionSpec {
    pub d: usize,
    /// Eigenvalues of the instance second moment (up to a common scale),
    /// sorted descending.
    pub spectrum: Vec<f64>,
    /// Unit vector.
    pub w_star_direction: Vec<f64>,
    /// `w* = w_star_scale · w_star_direction`.
    #[serde(default = "default_w_star_scale")]
    pub w_star_scale: f64,
    pub noise_sigma: f64,
    pub cap_y: f64,
    pub instance_norm: InstanceNorm,
    pub instance_radius: f64,
    pub family_kind: FamilyKind,
    /// Seed of a random rotation `U`; identity when absent.
    #[serde(default)]
    pub rotation_seed: Option<u64>,
}

fn default_w_star_scale() -> f64 {
    1.0
}

impl DistributionSpec {
    /// Square-loss distribution with `Y = R = 1`, the L2 instance ball, `U = I`
    /// and `w*` along `e₁`.
    pub fn square(spectrum: Vec<f64>, w_star_scale: f64, noise_sigma: f64) -> Self {
        let d = spectrum.len();
        let mut dir = vec![0.0; d];
        if d > 0 {
            dir[0] = 1.0;
        }
        Self {
            d,
            spectrum,
            w_star_direction: dir,
            w_star_scale,
            noise_sigma,
            cap_y: 1.0,
            instance_norm: InstanceNorm::L2,
            instance_radius: 1.0,
            family_kind: FamilyKind::Square,
            rotation_seed: None,
        }
    }

    pub fn family(&self) -> Result<LossFamily> {
        LossFamily::builtin(self.family_kind.loss_kind(), self.cap_y)
    }

    /// The dual-norm ball guaranteeing `|wᵀx| ≤ Y` on the instance set.
    pub fn domain(&self) -> Result<Domain> {
        dual_domain(self.instance_norm, self.cap_y, self.instance_radius)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.d;
        if d == 0 {
            return Err(Error::Spec("d must be at least 1".into()));
        }
        if self.spectrum.len() != d {
            return Err(Error::Spec(format!(
                "spectrum has {} entries, expected d = {d}",
                self.spectrum.len()
            )));
        }
        if self.spectrum.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::Spec("spectrum entries must be positive and finite".into()));
        }
        if self.spectrum.windows(2).any(|p| p[1] > p[0]) {
            return Err(Error::Spec("spectrum must be sorted descending".into()));
        }
        if self.w_star_direction.len() != d {
            return Err(Error::Spec(format!(
                "w_star_direction has {} entries, expected d = {d}",
                self.w_star_direction.len()
            )));
        }
        let norm = self.w_star_direction.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::Spec(format!("w_star_direction must be a unit vector, norm is {norm}")));
        }
        if !(self.w_star_scale >= 0.0) || !self.w_star_scale.is_finite() {
            return Err(Error::Spec("w_star_scale must be finite and nonnegative".into()));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return Err(Error::Spec("noise_sigma must be finite and nonnegative".into()));
        }
        if !(self.cap_y > 0.0) || !(self.instance_radius > 0.0) {
            return Err(Error::Spec("cap_y and instance_radius must be positive".into()));
        }
        if self.family_kind == FamilyKind::BoundedLogistic && self.cap_y < 1.0 {
            return Err(Error::Spec(format!("logistic labels are ±1, so cap_y must be at least 1, got {}", self.cap_y)));
        }
        let domain = self.domain()?;
        let w_star = self.w_star();
        if !domain.contains(&w_star, 1e-12) {
            let (lhs, rhs) = domain.defining_inequality(&w_star);
            return Err(Error::Spec(format!(
                "w* is infeasible: its dual norm {lhs} exceeds Y/R = {rhs}, so |w*ᵀx| can exceed \
                 cap_y on the instance set; use w_star_scale ≤ {}",
                self.w_star_scale * rhs / lhs
            )));
        }
        Ok(())
    }

    pub fn w_star(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.d,
            self.w_star_direction.iter().map(|v| v * self.w_star_scale),
        )
    }
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// signs of `R`'s diagonal moved into `Q`.
pub fn random_orthogonal(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// `Q diag(c^{k/(d−1)}) Qᵀ` with `Q` random orthogonal: a PD matrix with
/// condition number exactly `cond` (up to rounding).
pub fn random_pd(rng: &mut ChaCha8Rng, d: usize, cond: f64) -> DMatrix<f64> {
    let q = random_orthogonal(rng, d);
    let diag = DVector::from_fn(d, |k, _| {
        if d == 1 {
            1.0
        } else {
            cond.powf(k as f64 / (d - 1) as f64)
        }
    });
    let p = &q * DMatrix::from_diagonal(&diag) * q.transpose();
    (&p + p.transpose()) * 0.5
}

/// A validated distribution description with its sampling map precomputed.
#[derive(Debug, Clone)]
pub struct Distribution {
    spec: DistributionSpec,
    /// `c · U · diag(√s)`
    basis: DMatrix<f64>,
    w_star: DVector<f64>,
    family: LossFamily,
    domain: Domain,
}

impl Distribution {
    pub fn new(spec: &DistributionSpec) -> Result<Self> {
        spec.validate()?;
        let d = spec.d;
        let u = match spec.rotation_seed {
            Some(seed) => random_orthogonal(&mut stream_rng(seed, Purpose::Rotation, 0, 0), d),
            None => DMatrix::identity(d, d),
        };
        let sqrt_s = DVector::from_iterator(d, spec.spectrum.iter().map(|s| s.sqrt()));
        let unscaled = &u * DMatrix::from_diagonal(&sqrt_s);
        // largest attainable norm of unscaled·g over the unit sphere
        let reach = match spec.instance_norm {
            InstanceNorm::L2 => sqrt_s.max(),
            InstanceNorm::Linf => unscaled.row_iter().map(|r| r.norm()).fold(0.0, f64::max),
        };
        let basis = unscaled * (spec.instance_radius / reach);
        Ok(Self {
            spec: spec.clone(),
            basis,
            w_star: spec.w_star(),
            family: spec.family()?,
            domain: spec.domain()?,
        })
    }

    pub fn spec(&self) -> &DistributionSpec {
        &self.spec
    }

    pub fn family(&self) -> &LossFamily {
        &self.family
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn w_star(&self) -> &DVector<f64> {
        &self.w_star
    }

    /// `E[xxᵀ] = B Bᵀ / d` with `B = c U diag(√s)`.
    pub fn population_covariance(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose() / self.spec.d as f64
    }

    /// Draws `n` instances and labels.
    pub fn sample(&self, rng: &mut ChaCha8Rng, n: usize) -> (DMatrix<f64>, DVector<f64>) {
        let d = self.spec.d;
        let mut x = DMatrix::zeros(n, d);
        let mut y = DVector::zeros(n);
        let cap = self.spec.cap_y;
        for i in 0..n {
            let g = loop {
                let g = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
                let norm = g.norm();
                if norm > 0.0 {
                    break g / norm;
                }
            };
            let xi = &self.basis * g;
            let z = self.w_star.dot(&xi);
            y[i] = match self.spec.family_kind {
                FamilyKind::Square => {
                    let noise: f64 = rng.sample(StandardNormal);
                    (z + self.spec.noise_sigma * noise).clamp(-cap, cap)
                }
                FamilyKind::BoundedLogistic => {
                    if rng.random::<f64>() < sigmoid(z) {
                        1.0
                    } else {
                        -1.0
                    }
                }
            };
            x.set_row(i, &xi.transpose());
        }
        (x, y)
    }

    /// Collapses every instance to zero, giving constant losses.
    #[cfg(test)]
    pub(crate) fn with_zero_instances(mut self) -> Self {
        self.basis.fill(0.0);
        self
    }

    pub fn dataset(&self, rng: &mut ChaCha8Rng, n: usize) -> Result<Dataset> {
        let (x, y) = self.sample(rng, n);
        Dataset::new(x, y, self.spec.cap_y)
    }
}

/// `n` samples from the distribution `spec`, reproducible from `seed`.
pub fn synth_regression(spec: &DistributionSpec, n: usize, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::Argument(format!("need n ≥ 2, got {n}")));
    }
    let dist = Distribution::new(spec)?;
    dist.dataset(&mut stream_rng(seed, Purpose::Dataset, 0, 0), n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glm::covariance::empirical_covariance;
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    #[test]
    fn feasibility_of_generated_samples() {
        for norm in [InstanceNorm::L2, InstanceNorm::Linf] {
            for kind in [FamilyKind::Square, FamilyKind::BoundedLogistic] {
                let mut spec = DistributionSpec::square(vec![9.0, 4.0, 1.0], 0.5, 0.5);
                spec.instance_norm = norm;
                spec.family_kind = kind;
                spec.rotation_seed = Some(3);
                spec.instance_radius = 2.0;
                spec.cap_y = 1.5;
                spec.w_star_scale = if norm == InstanceNorm::L2 { 0.7 } else { 0.5 };
                let dist = Distribution::new(&spec).unwrap();
                let (x, y) = dist.sample(&mut stream_rng(1, Purpose::Test, 0, 0), 100_000);
                for i in 0..x.nrows() {
                    let r = x.row(i);
                    let size = match norm {
                        InstanceNorm::L2 => r.norm(),
                        InstanceNorm::Linf => r.amax(),
                    };
                    assert!(size <= 2.0 + 1e-12);
                    assert!(y[i].abs() <= 1.5);
                    assert!(dist.w_star().dot(&r.transpose()).abs() <= 1.5 + 1e-12);
                }
            }
        }
    }

    #[test]
    fn infeasible_w_star_is_rejected() {
        let spec = DistributionSpec::square(vec![1.0, 1.0], 1.5, 0.0);
        let err = Distribution::new(&spec).unwrap_err();
        assert!(matches!(err, Error::Spec(ref m) if m.contains("w_star_scale")), "{err}");
    }

    #[test]
    fn invalid_specs() {
        let good = DistributionSpec::square(vec![2.0, 1.0], 0.5, 0.1);
        assert!(good.validate().is_ok());
        let mut s = good.clone();
        s.spectrum = vec![1.0, 2.0];
        assert!(s.validate().is_err());
        let mut s = good.clone();
        s.w_star_direction = vec![1.0, 1.0];
        assert!(s.validate().is_err());
        let mut s = good.clone();
        s.spectrum = vec![1.0];
        assert!(s.validate().is_err());
        let mut s = DistributionSpec::square(vec![2.0, 1.0], 0.2, 0.0);
        s.family_kind = FamilyKind::BoundedLogistic;
        s.cap_y = 0.5;
        assert!(s.validate().is_err());
        let json = r#"{"d":1,"spectrum":[1],"w_star_direction":[1],"noise_sigma":0,
            "cap_y":1,"instance_norm":"l2","instance_radius":1,"family_kind":"square","extra":1}"#;
        assert!(serde_json::from_str::<DistributionSpec>(json).is_err());
    }

    #[test]
    fn noiseless_labels_are_exact() {
        let spec = DistributionSpec::square(vec![1.0; 3], 0.8, 0.0);
        let ds = synth_regression(&spec, 50, 4).unwrap();
        let z = ds.predictions(&spec.w_star());
        assert_eq!(&z, ds.y());
    }

    #[test]
    fn seeded_datasets_are_identical() {
        let mut spec = DistributionSpec::square(vec![3.0, 1.0], 0.5, 0.2);
        spec.rotation_seed = Some(8);
        let a = synth_regression(&spec, 30, 77).unwrap();
        let b = synth_regression(&spec, 30, 77).unwrap();
        let c = synth_regression(&spec, 30, 78).unwrap();
        let (mut ba, mut bb) = (Vec::new(), Vec::new());
        a.write_csv(&mut ba).unwrap();
        b.write_csv(&mut bb).unwrap();
        assert_eq!(ba, bb);
        assert_ne!(a, c);
    }

    #[test]
    fn empirical_condition_number_tracks_population() {
        let spec = DistributionSpec::square(vec![100.0, 1.0, 1.0, 1.0, 1.0], 0.05, 0.1);
        let dist = Distribution::new(&spec).unwrap();
        let ds = synth_regression(&spec, 10_000, 12).unwrap();
        let cov = empirical_covariance(&ds).unwrap();
        let pop = dist.population_covariance();
        let population_kappa = pop.trace() / pop.symmetric_eigenvalues().min();
        assert_relative_eq!(population_kappa, 104.0, epsilon = 1e-9);
        let ratio = cov.kappa_c / population_kappa;
        assert!((0.8..=1.2).contains(&ratio), "κ ratio {ratio}");
    }

    #[test]
    fn random_pd_has_requested_condition() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for d in [1, 2, 5] {
            let p = random_pd(&mut rng, d, 1e4);
            let e = p.symmetric_eigenvalues();
            let cond = e.max() / e.min();
            let expected = if d == 1 { 1.0 } else { 1e4 };
            assert_relative_eq!(cond, expected, max_relative = 1e-8);
            let q = random_orthogonal(&mut rng, d);
            assert!((q.tr_mul(&q) - DMatrix::identity(d, d)).norm() <= 1e-12);
        }
    }
}
