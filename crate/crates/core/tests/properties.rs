//! Randomised invariants over generated instances.

use std::io::Write;

use glmstab::experiments::random_pd;
use glmstab::{
    average_stability, dual_domain, empirical_covariance, erm_solve, inverse_sqrt, loss_eval,
    optimal_preconditioner, precondition, preconditioned_bound, preconditioned_stability,
    project, Dataset, Domain, InstanceNorm, LossFamily, Preconditioner, RANK_TOL,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Rows with `‖x‖ ≤ 1`, labels in `[−1, 1]` (±1 when `signs`).
fn dataset_strategy(max_d: usize, max_n: usize, signs: bool) -> impl Strategy<Value = Dataset> {
    (1..=max_d, 2..=max_n).prop_flat_map(move |(d, n)| {
        (
            prop::collection::vec(prop::collection::vec(-1.0..1.0f64, d), n),
            prop::collection::vec(-1.0..1.0f64, n),
        )
            .prop_map(move |(mut rows, labels)| {
                for r in &mut rows {
                    let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm > 1.0 {
                        r.iter_mut().for_each(|v| *v /= norm);
                    }
                }
                let labels: Vec<f64> = if signs {
                    labels.iter().map(|v| if *v >= 0.0 { 1.0 } else { -1.0 }).collect()
                } else {
                    labels
                };
                Dataset::from_rows(&rows, &labels, 1.0).unwrap()
            })
    })
}

fn full_rank(ds: &Dataset) -> bool {
    empirical_covariance(ds).unwrap().rank == ds.d()
}

/// Every `x_i` lies in the span of the other samples, so each `ŵ_iᵀx_i` is
/// the same for all leave-one-out minimisers.
fn loo_well_posed(ds: &Dataset) -> bool {
    let rank = empirical_covariance(ds).unwrap().rank;
    (0..ds.n()).all(|i| empirical_covariance(&ds.without(i).unwrap()).unwrap().rank == rank)
}

fn random_preconditioner(seed: u64, d: usize, cond: f64) -> Preconditioner {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    inverse_sqrt(&random_pd(&mut rng, d, cond), RANK_TOL).unwrap()
}

fn families() -> [LossFamily; 2] {
    [LossFamily::square(1.0).unwrap(), LossFamily::bounded_logistic(1.0).unwrap()]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn certified_constants_hold(y in -1.0..1.0f64, z in -1.0..1.0f64, sign in any::<bool>()) {
        for (k, family) in families().iter().enumerate() {
            let label = if k == 1 { if sign { 1.0 } else { -1.0 } } else { y };
            let (_, d1, d2) = loss_eval(family, label, z).unwrap();
            prop_assert!(d1.abs() <= family.rho() + 1e-12);
            prop_assert!(d2 >= family.alpha() - 1e-12);
        }
    }

    #[test]
    fn covariance_sandwich(ds in dataset_strategy(4, 8, true), seed in any::<u64>()) {
        let cov = empirical_covariance(&ds).unwrap();
        prop_assume!(cov.rank > 0);
        let basis = cov.span_basis();
        let domain = dual_domain(InstanceNorm::L2, 1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for family in families() {
            for _ in 0..10 {
                let w = project(&domain, &DVector::from_fn(ds.d(), |_, _| rand::Rng::random_range(&mut rng, -1.0..1.0)));
                let z = ds.predictions(&w);
                let mut h = DMatrix::zeros(ds.d(), ds.d());
                for i in 0..ds.n() {
                    let xi = ds.instance(i);
                    h += (&xi * xi.transpose()) * (loss_eval(&family, ds.y()[i], z[i]).unwrap().2 / ds.n() as f64);
                }
                let restricted = basis.transpose() * h * &basis;
                let hmin = restricted.symmetric_eigenvalues().min();
                prop_assert!(family.alpha() * cov.lambda_min_nonzero <= hmin + 1e-9);
            }
        }
    }

    #[test]
    fn preconditioned_covariance_identity(ds in dataset_strategy(5, 10, false), seed in any::<u64>(), cond in 1.0..1e4f64) {
        let pre = random_preconditioner(seed, ds.d(), cond);
        let domain = Domain::euclidean_ball(1.0).unwrap();
        let (dp, _) = precondition(&ds, &domain, &pre).unwrap();
        let c = empirical_covariance(&ds).unwrap().c_hat;
        let cp = empirical_covariance(&dp).unwrap().c_hat;
        let expected = &pre.p_inv_sqrt * &c * &pre.p_inv_sqrt;
        prop_assert!((cp - expected).amax() <= 1e-10 * c.norm().max(f64::MIN_POSITIVE));
    }

    #[test]
    fn predictions_are_invariant(ds in dataset_strategy(5, 10, false), seed in any::<u64>(), cond in 1.0..1e4f64) {
        let pre = random_preconditioner(seed, ds.d(), cond);
        let domain = Domain::euclidean_ball(1.0).unwrap();
        let (dp, wp) = precondition(&ds, &domain, &pre).unwrap();
        let w = project(&domain, &DVector::from_fn(ds.d(), |j, _| ((seed >> j) & 7) as f64 / 7.0 - 0.5));
        let v = &pre.p_sqrt * &w;
        prop_assert!(wp.contains(&v, 1e-9));
        let (z, zp) = (ds.predictions(&w), dp.predictions(&v));
        for j in 0..ds.n() {
            prop_assert!((z[j] - zp[j]).abs() <= 1e-10 * z[j].abs() + 1e-12);
        }
    }

    #[test]
    fn optimal_preconditioner_is_minimal(ds in dataset_strategy(4, 12, false), seed in any::<u64>()) {
        prop_assume!(full_rank(&ds));
        let cov = empirical_covariance(&ds).unwrap();
        let d = ds.d() as f64;
        let domain = Domain::euclidean_ball(1.0).unwrap();
        let kappa_after = |pre: &Preconditioner| {
            let (dp, _) = precondition(&ds, &domain, pre).unwrap();
            empirical_covariance(&dp).unwrap().kappa_c
        };
        let best = kappa_after(&optimal_preconditioner(&cov, 0.0).unwrap());
        prop_assert!((best - d).abs() <= 1e-8 * d);
        for k in 0..10 {
            let pre = random_preconditioner(seed.wrapping_add(k), ds.d(), 10f64.powi(k as i32 % 5));
            prop_assert!(kappa_after(&pre) >= d - 1e-8);
        }
    }

    #[test]
    fn dual_domain_is_feasible(
        x in prop::collection::vec(-1.0..1.0f64, 3),
        w in prop::collection::vec(-5.0..5.0f64, 3),
        linf in any::<bool>(),
        radius in 0.1..3.0f64,
    ) {
        let norm = if linf { InstanceNorm::Linf } else { InstanceNorm::L2 };
        let mut x = DVector::from_vec(x);
        if !linf && x.norm() > 1.0 {
            x /= x.norm();
        }
        x *= radius;
        let domain = dual_domain(norm, 1.0, radius).unwrap();
        let p = project(&domain, &DVector::from_vec(w));
        prop_assert!(p.dot(&x).abs() <= 1.0 + 1e-12);
    }

    #[test]
    fn interior_least_squares_certificate(ds in dataset_strategy(3, 10, false)) {
        prop_assume!(full_rank(&ds));
        let cov = empirical_covariance(&ds).unwrap();
        prop_assume!(cov.lambda_min_nonzero > 1e-3);
        let sq = LossFamily::square(1.0).unwrap();
        let x = ds.x();
        let closed = (x.tr_mul(x)).cholesky().unwrap().solve(&x.tr_mul(ds.y()));
        // the ball contains the unconstrained solution; skip instances where
        // its predictions leave [−Y, Y]
        let radius = closed.norm() * 1.01 + 1e-3;
        prop_assume!(ds.predictions(&closed).amax() <= 1.0);
        let domain = Domain::euclidean_ball(radius).unwrap();
        let r = erm_solve(&ds, &sq, &domain, 1e-10, 100_000).unwrap();
        let f_closed = glmstab::empirical_risk(&ds, &sq, &closed).unwrap().0;
        prop_assert!(r.objective - f_closed <= r.certificate_eps + 1e-15);
    }

    #[test]
    fn scalar_preconditioning_keeps_delta(ds in dataset_strategy(3, 8, false), c in 0.01..100.0f64) {
        prop_assume!(loo_well_posed(&ds));
        let sq = LossFamily::square(1.0).unwrap();
        let domain = Domain::euclidean_ball(1.0).unwrap();
        let pre = inverse_sqrt(&(DMatrix::identity(ds.d(), ds.d()) * c), RANK_TOL).unwrap();
        let a = average_stability(&ds, &sq, &domain, 1e-10).unwrap();
        let b = preconditioned_stability(&ds, &sq, &domain, &pre, 1e-10).unwrap();
        prop_assert!((a.delta - b.delta).abs() <= a.numeric_slack + b.numeric_slack + 1e-9);
    }

    #[test]
    fn preconditioned_dominance(ds in dataset_strategy(4, 10, false)) {
        let sq = LossFamily::square(1.0).unwrap();
        let domain = Domain::euclidean_ball(1.0).unwrap();
        let cov = empirical_covariance(&ds).unwrap();
        prop_assume!(cov.rank > 0);
        let pre = optimal_preconditioner(&cov, 0.1).unwrap();
        let a = average_stability(&ds, &sq, &domain, 1e-10).unwrap();
        let b = preconditioned_stability(&ds, &sq, &domain, &pre, 1e-10).unwrap();
        let target = preconditioned_bound(sq.rho(), sq.alpha(), cov.rank, ds.n());
        prop_assert!((b.bound_avg - target).abs() <= 1e-10 * target);
        prop_assert!(b.bound_avg <= a.bound_avg * (1.0 + 1e-12));
    }

    #[test]
    fn csv_round_trip(ds in dataset_strategy(4, 10, false)) {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        ds.write_csv(&mut file).unwrap();
        file.flush().unwrap();
        let back = Dataset::load_csv(file.path(), 1.0).unwrap();
        prop_assert_eq!(back.x(), ds.x());
        prop_assert_eq!(back.y(), ds.y());
    }
}
