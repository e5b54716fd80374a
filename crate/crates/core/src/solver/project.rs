//! Euclidean projections onto every [`Domain`] variant.

use nalgebra::DVector;

use crate::glm::domain::{Domain, QuadForm};
use crate::linalg::solve_secular;

/// Euclidean projection of `point` onto `domain`. Interior points are
/// returned unchanged.
pub fn project(domain: &Domain, point: &DVector<f64>) -> DVector<f64> {
    match domain {
        Domain::EuclideanBall { radius } => project_ball(point, *radius),
        Domain::Box { radius } => point.map(|v| v.clamp(-radius, *radius)),
        Domain::L1Ball { radius } => project_l1(point, *radius),
        Domain::QuadBall(q) => project_quad(q, point),
    }
}

fn project_ball(p: &DVector<f64>, r: f64) -> DVector<f64> {
    let norm = p.norm();
    if norm <= r {
        p.clone()
    } else {
        p * (r / norm)
    }
}

/// Sort-and-threshold: find `τ` with `Σ max(|p_i| − τ, 0) = r` and
/// soft-threshold by it.
fn project_l1(p: &DVector<f64>, r: f64) -> DVector<f64> {
    if p.lp_norm(1) <= r {
        return p.clone();
    }
    let mut mags: Vec<f64> = p.iter().map(|v| v.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (k, &m) in mags.iter().enumerate() {
        cumsum += m;
        let t = (cumsum - r) / (k + 1) as f64;
        if m > t {
            tau = t;
        } else {
            break;
        }
    }
    let mut out = p.map(|v| v.signum() * (v.abs() - tau).max(0.0));
    // guard against roundoff pushing the result just outside
    let l1 = out.lp_norm(1);
    if l1 > r {
        out *= r / l1;
    }
    out
}

/// Projection onto `{w : wᵀAw ≤ r²}`. In the eigenbasis of `A` the KKT
/// point is `x_i = z_i / (1 + θλ_i)`, with `θ` the root of
/// `Σ λ_i z_i² / (1 + θλ_i)² = r²`.
fn project_quad(q: &QuadForm, p: &DVector<f64>) -> DVector<f64> {
    let r = q.radius();
    if q.value(p) <= r * r {
        return p.clone();
    }
    let eig = q.eigen();
    let z = eig.vectors.transpose() * p;
    let lambda = &eig.values;
    let b: Vec<f64> = z.iter().zip(lambda.iter()).map(|(zi, li)| zi / li.sqrt()).collect();
    let sigma: Vec<f64> = lambda.iter().map(|li| 1.0 / li).collect();
    let theta = solve_secular(&b, &sigma, r);
    let mut x = DVector::from_iterator(
        z.len(),
        z.iter().zip(lambda.iter()).map(|(zi, li)| zi / (1.0 + theta * li)),
    );
    let value: f64 = x.iter().zip(lambda.iter()).map(|(xi, li)| li * xi * xi).sum();
    if value > r * r {
        x *= r / value.sqrt();
    }
    &eig.vectors * x
}
