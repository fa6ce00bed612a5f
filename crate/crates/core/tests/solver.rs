use drofolio::dro_solver::{objective, objective_gradient, DEFAULT_MAX_ITER, DEFAULT_TOL};
use drofolio::{check_feasibility, solve_hd_dro, DroProblem, SolveStatus};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn random_problem(g: &mut ChaCha8Rng, p: usize, k: usize, delta: f64, rho: f64) -> DroProblem {
    let mut n = || -> f64 { g.sample(StandardNormal) };
    let b = DMatrix::from_fn(p, k, |_, _| n());
    let a = DMatrix::from_fn(k, k, |_, _| 0.5 * n());
    let sf = &a * a.transpose() + DMatrix::identity(k, k) * 0.1;
    let mu = DVector::from_fn(k, |_, _| 0.1 * n());
    let d = DVector::from_fn(p, |_, _| 0.05 + 0.1 * n().abs());
    DroProblem::new(b, sf, mu, DMatrix::from_diagonal(&d), delta, rho).unwrap()
}

fn budget_point(g: &mut ChaCha8Rng, p: usize) -> DVector<f64> {
    let mut w = DVector::from_fn(p, |_, _| g.sample::<f64, _>(StandardNormal));
    w.add_scalar_mut((1.0 - w.sum()) / p as f64);
    w
}

#[test]
fn objective_is_convex() {
    let mut g = ChaCha8Rng::seed_from_u64(1);
    for i in 0..1000 {
        let p = 2 + i % 6;
        let delta = g.random_range(0.0..0.1);
        let prob = random_problem(&mut g, p, 1 + i % 3, delta, -1.0);
        let (a, b) = (budget_point(&mut g, p), budget_point(&mut g, p));
        let t: f64 = g.random_range(0.0..1.0);
        let mid = &a * t + &b * (1.0 - t);
        assert!(objective(&prob, &mid) <= t * objective(&prob, &a) + (1.0 - t) * objective(&prob, &b) + 1e-10);
    }
}

#[test]
fn optimal_value_grows_with_radius() {
    let mut g = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..10 {
        let base = random_problem(&mut g, 6, 2, 0.0, -10.0);
        let mut last = f64::NEG_INFINITY;
        for delta in [0.0, 1e-3, 1e-2, 5e-2, 0.2] {
            let prob = DroProblem { delta, ..base.clone() };
            let out = solve_hd_dro(&prob, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
            assert_eq!(out.status, SolveStatus::Optimal);
            assert!(out.objective >= last - 1e-9 * last.abs().max(1.0));
            last = out.objective;
        }
    }
}

#[test]
fn weights_invariant_to_joint_rescaling() {
    let mut g = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let prob = random_problem(&mut g, 5, 2, 0.02, -0.05);
        let a: f64 = g.random_range(0.1..10.0);
        let scaled = DroProblem {
            factor_cov: &prob.factor_cov * a,
            residual_cov: &prob.residual_cov * a,
            factor_mean: &prob.factor_mean * a.sqrt(),
            delta: prob.delta * a,
            rho: prob.rho * a.sqrt(),
            ..prob.clone()
        };
        let x = solve_hd_dro(&prob, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let y = solve_hd_dro(&scaled, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!((y.objective / x.objective - a).abs() < 1e-6 * a);
        assert!((x.weights.unwrap() - y.weights.unwrap()).amax() < 1e-5);
    }
}

#[test]
fn gradient_matches_central_differences() {
    let mut g = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let prob = random_problem(&mut g, 5, 2, 0.03, -1.0);
        let w = budget_point(&mut g, 5);
        let grad = objective_gradient(&prob, &w);
        for i in 0..5 {
            let mut e = DVector::zeros(5);
            e[i] = 1e-6;
            let fd = (objective(&prob, &(&w + &e)) - objective(&prob, &(&w - &e))) / 2e-6;
            assert!((fd - grad[i]).abs() <= 1e-5 * grad.amax().max(1.0), "{fd} vs {}", grad[i]);
        }
    }
}

#[test]
fn infeasible_region_is_reported_without_iterating() {
    // One factor with mean 0.01 and a radius that swamps it: no floor above
    // zero can be met.
    let prob = DroProblem::new(
        DMatrix::from_element(3, 1, 1.0),
        DMatrix::identity(1, 1),
        DVector::from_element(1, 0.01),
        DMatrix::identity(3, 3) * 0.1,
        0.01,
        0.05,
    )
    .unwrap();
    assert!(!check_feasibility(&prob).unwrap().feasible);
    let out = solve_hd_dro(&prob, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    assert_eq!(out.status, SolveStatus::Infeasible);
    assert_eq!(out.iterations, 0);
    assert!(out.weights.is_none());
}

#[test]
fn optimal_status_implies_feasible_output() {
    let mut g = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..40 {
        let (delta, rho) = (g.random_range(0.0..0.05), g.random_range(-0.2..0.0));
        let prob = random_problem(&mut g, 8, 2, delta, rho);
        let out = solve_hd_dro(&prob, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        if out.status == SolveStatus::Optimal {
            assert!(out.budget_residual.abs() <= 1e-8);
            assert!(out.return_slack >= -1e-8);
        }
    }
}
