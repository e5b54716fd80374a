//! Compact convex constraint sets `W` containing the origin.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_square, relative_asymmetry, symmetrize, SymEigen};
use crate::RANK_TOL;

/// Ellipsoid `{w : wᵀ A w ≤ r²}` with the eigendecomposition of `A` cached.
#[derive(Debug, Clone)]
pub struct QuadForm {
    matrix: DMatrix<f64>,
    radius: f64,
    eigen: SymEigen,
    inv_sqrt: DMatrix<f64>,
}

impl QuadForm {
    pub fn new(matrix: DMatrix<f64>, radius: f64) -> Result<Self> {
        check_radius(radius)?;
        check_square(&matrix, "quadratic form")?;
        let asym = relative_asymmetry(&matrix);
        if asym > 1e-10 {
            return Err(Error::NotSymmetric(asym));
        }
        let matrix = symmetrize(&matrix);
        let eigen = SymEigen::new(&matrix);
        let lmax = eigen.max();
        let lmin = eigen.values[eigen.dim() - 1];
        let threshold = RANK_TOL * lmax;
        if !(lmin > 0.0) || lmin < threshold {
            return Err(Error::NotPositiveDefinite { eigenvalue: lmin, threshold });
        }
        let inv_sqrt = eigen.spectral_map(|v| 1.0 / v.sqrt());
        Ok(Self { matrix, radius, eigen, inv_sqrt })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn eigen(&self) -> &SymEigen {
        &self.eigen
    }

    /// `A^{-1/2}`
    pub fn inv_sqrt(&self) -> &DMatrix<f64> {
        &self.inv_sqrt
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `wᵀ A w`
    pub fn value(&self, w: &DVector<f64>) -> f64 {
        w.dot(&(&self.matrix * w))
    }
}

#[derive(Debug, Clone)]
pub enum Domain {
    /// `‖w‖₂ ≤ r`
    EuclideanBall { radius: f64 },
    /// `wᵀ A w ≤ r²`
    QuadBall(QuadForm),
    /// `‖w‖₁ ≤ r`
    L1Ball { radius: f64 },
    /// `‖w‖∞ ≤ r`
    Box { radius: f64 },
}

fn check_radius(r: f64) -> Result<()> {
    if r > 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(Error::Argument(format!("domain radius must be positive, got {r}")))
    }
}

impl Domain {
    pub fn euclidean_ball(radius: f64) -> Result<Self> {
        check_radius(radius)?;
        Ok(Domain::EuclideanBall { radius })
    }

    pub fn quad_ball(matrix: DMatrix<f64>, radius: f64) -> Result<Self> {
        Ok(Domain::QuadBall(QuadForm::new(matrix, radius)?))
    }

    pub fn l1_ball(radius: f64) -> Result<Self> {
        check_radius(radius)?;
        Ok(Domain::L1Ball { radius })
    }

    pub fn box_ball(radius: f64) -> Result<Self> {
        check_radius(radius)?;
        Ok(Domain::Box { radius })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Domain::EuclideanBall { .. } => "euclidean_ball",
            Domain::QuadBall(_) => "quad_ball",
            Domain::L1Ball { .. } => "l1_ball",
            Domain::Box { .. } => "box",
        }
    }

    pub fn radius(&self) -> f64 {
        match self {
            Domain::EuclideanBall { radius }
            | Domain::L1Ball { radius }
            | Domain::Box { radius } => *radius,
            Domain::QuadBall(q) => q.radius,
        }
    }

    /// Dimension constraint, if the domain carries one.
    pub fn dim(&self) -> Option<usize> {
        match self {
            Domain::QuadBall(q) => Some(q.dim()),
            _ => None,
        }
    }

    pub fn check_dim(&self, d: usize) -> Result<()> {
        match self.dim() {
            Some(k) if k != d => Err(Error::Argument(format!(
                "domain has dimension {k} but data has dimension {d}"
            ))),
            _ => Ok(()),
        }
    }

    /// `(lhs, rhs)` of the defining inequality `lhs ≤ rhs`.
    pub fn defining_inequality(&self, w: &DVector<f64>) -> (f64, f64) {
        match self {
            Domain::EuclideanBall { radius } => (w.norm(), *radius),
            Domain::QuadBall(q) => (q.value(w), q.radius * q.radius),
            Domain::L1Ball { radius } => (w.lp_norm(1), *radius),
            Domain::Box { radius } => (w.amax(), *radius),
        }
    }

    /// Membership with `slack` relative to the right-hand side.
    pub fn contains(&self, w: &DVector<f64>, slack: f64) -> bool {
        let (lhs, rhs) = self.defining_inequality(w);
        lhs <= rhs + slack * rhs.max(1.0)
    }

    /// Ellipsoidal description `{A^{-1/2} s : ‖s‖ ≤ r}` for the balls that
    /// have one; `None` for the identity map.
    pub(crate) fn ellipsoid(&self) -> Option<(Option<&DMatrix<f64>>, f64)> {
        match self {
            Domain::EuclideanBall { radius } => Some((None, *radius)),
            Domain::QuadBall(q) => Some((Some(&q.inv_sqrt), q.radius)),
            _ => None,
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(r={})", self.name(), self.radius())
    }
}

/// Norm bounding the instance set `X = {x : ‖x‖ ≤ R}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InstanceNorm {
    L2,
    Linf,
}

impl FromStr for InstanceNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l2" => Ok(InstanceNorm::L2),
            "linf" => Ok(InstanceNorm::Linf),
            other => Err(Error::Argument(format!("unsupported instance norm `{other}`"))),
        }
    }
}

/// Largest domain with `|wᵀx| ≤ Y` for every `x` in the instance ball: the
/// dual-norm ball of radius `Y / R`.
pub fn dual_domain(norm: InstanceNorm, cap_y: f64, instance_radius: f64) -> Result<Domain> {
    if !(cap_y > 0.0 && instance_radius > 0.0) {
        return Err(Error::Argument(format!(
            "Y and instance radius must be positive, got Y={cap_y}, R={instance_radius}"
        )));
    }
    let r = cap_y / instance_radius;
    match norm {
        InstanceNorm::L2 => Domain::euclidean_ball(r),
        InstanceNorm::Linf => Domain::l1_ball(r),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dual_domain_examples() {
        assert!(matches!(
            dual_domain(InstanceNorm::L2, 1.0, 1.0).unwrap(),
            Domain::EuclideanBall { radius } if radius == 1.0
        ));
        assert!(matches!(
            dual_domain(InstanceNorm::L2, 2.0, 4.0).unwrap(),
            Domain::EuclideanBall { radius } if radius == 0.5
        ));
        assert!(matches!(
            dual_domain(InstanceNorm::Linf, 1.0, 1.0).unwrap(),
            Domain::L1Ball { radius } if radius == 1.0
        ));
        assert!("l3".parse::<InstanceNorm>().is_err());
        assert_eq!("Linf".parse::<InstanceNorm>().unwrap(), InstanceNorm::Linf);
    }

    fn random_in_ball(rng: &mut ChaCha8Rng, d: usize, norm: InstanceNorm, r: f64) -> DVector<f64> {
        let mut v = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
        let n = match norm {
            InstanceNorm::L2 => v.norm(),
            InstanceNorm::Linf => v.amax(),
        };
        // land on the boundary half the time
        let scale = if rng.random::<bool>() { 1.0 } else { rng.random::<f64>() };
        v *= scale * r / n;
        v
    }

    #[test]
    fn dual_domain_feasibility() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for norm in [InstanceNorm::L2, InstanceNorm::Linf] {
            for _ in 0..10_000 {
                let d = rng.random_range(1..6);
                let cap_y = rng.random_range(0.1..3.0);
                let big_r = rng.random_range(0.1..3.0);
                let dom = dual_domain(norm, cap_y, big_r).unwrap();
                let mut w = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
                let wn = match norm {
                    InstanceNorm::L2 => w.norm(),
                    InstanceNorm::Linf => w.lp_norm(1),
                };
                let scale = if rng.random::<bool>() { 1.0 } else { rng.random::<f64>() };
                w *= scale * dom.radius() / wn;
                assert!(dom.contains(&w, 1e-12));
                let x = if rng.random::<bool>() {
                    // the maximiser of wᵀx over the instance ball
                    match norm {
                        InstanceNorm::L2 => &w * (big_r / w.norm()),
                        InstanceNorm::Linf => w.map(|v| big_r * v.signum()),
                    }
                } else {
                    random_in_ball(&mut rng, d, norm, big_r)
                };
                assert!(w.dot(&x).abs() <= cap_y + 1e-12);
            }
        }
    }

    #[test]
    fn quad_ball_validation() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let q = QuadForm::new(a.clone(), 1.0).unwrap();
        let s = q.inv_sqrt();
        let ident = s * &a * s;
        assert!((ident - DMatrix::identity(2, 2)).norm() < 1e-12);
        let asym = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 2.0]);
        assert!(matches!(QuadForm::new(asym, 1.0), Err(Error::NotSymmetric(_))));
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(
            QuadForm::new(singular, 1.0),
            Err(Error::NotPositiveDefinite { .. })
        ));
        assert!(Domain::euclidean_ball(0.0).is_err());
    }

    #[test]
    fn membership() {
        let w = DVector::from_vec(vec![0.6, -0.6]);
        assert!(Domain::euclidean_ball(1.0).unwrap().contains(&w, 0.0));
        assert!(!Domain::l1_ball(1.0).unwrap().contains(&w, 0.0));
        assert!(Domain::box_ball(0.6).unwrap().contains(&w, 0.0));
        let q = Domain::quad_ball(DMatrix::from_diagonal_element(2, 2, 4.0), 1.0).unwrap();
        // 4·0.72 = 2.88 > 1
        assert!(!q.contains(&w, 1e-10));
    }
}
