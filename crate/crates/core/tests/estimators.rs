mod common;

use common::*;
use pertprec::adversary::{adversarial_loss, surrogate_loss, PerturbationSpec};
use pertprec::glasso::{
    build_penalty, empirical_abs_means, fit_linf, kkt_residual, sample_moments, weighted_glasso,
    SolverConfig,
};
use pertprec::matrix::symeig;
use pertprec::shrinkage::{
    fit_l2, objective_l2, reference_solver_l2, trace_identity_check, wasserstein_objective,
};
use pertprec::Dataset;

#[test]
fn agrees_with_proximal_gradient_oracle() {
    let mut r = rng(20);
    for _ in 0..10 {
        let x = random_data(&mut r, 30, 3);
        let (a, omega) = sample_moments(&x, &SolverConfig::default());
        let delta = uniform(&mut r, 0.05, 0.4);
        for flag in [false, true] {
            let pen = build_penalty(&omega, delta, flag).unwrap();
            let fit = weighted_glasso(&a, &pen, &SolverConfig::default()).unwrap();
            let oracle = proximal_gradient(&a, &pen);
            assert!(fit.estimate.max_abs_diff(&oracle) < 1e-4, "{:?} vs {:?}", fit.estimate.matrix(), oracle);
        }
    }
}

#[test]
fn objective_trace_is_monotone_and_kkt_small() {
    let mut r = rng(21);
    for trial in 0..20 {
        let d = 2 + trial % 9;
        let x = random_data(&mut r, 15 + 5 * d, d);
        let delta = uniform(&mut r, 0.01, 0.6);
        let fit = fit_linf(&x, delta, &SolverConfig::default(), trial % 2 == 0).unwrap();
        for w in fit.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0), "{:?}", fit.objective_trace);
        }
        assert!(fit.kkt_residual <= 1e-6);
        let (a, omega) = sample_moments(&x, &SolverConfig::default());
        let pen = build_penalty(&omega, delta, trial % 2 == 0).unwrap();
        assert!(kkt_residual(&a, &pen, &fit.estimate).unwrap() <= 1e-6);
    }
}

#[test]
fn adversarial_loss_bounded_by_attained_objective() {
    let mut r = rng(22);
    for trial in 0..20 {
        let d = 2 + trial % 9;
        let x = random_data(&mut r, 20, d);
        let delta = uniform(&mut r, 0.05, 0.8);
        let fit = fit_linf(&x, delta, &SolverConfig::default(), true).unwrap();
        let attained = fit.objective;
        let sur = surrogate_loss(&x, &fit.estimate, delta);
        let linf = adversarial_loss(&x, &fit.estimate, PerturbationSpec::linf(delta).unwrap()).unwrap();
        let l2 = adversarial_loss(&x, &fit.estimate, PerturbationSpec::l2(delta).unwrap()).unwrap();
        let slack = 1e-9 * attained.abs().max(1.0);
        assert!(l2 <= linf + slack);
        assert!(linf <= sur + slack);
        assert!(sur <= attained + slack, "{sur} > {attained}");
    }
}

#[test]
fn penalty_scales_with_columns() {
    let mut r = rng(23);
    let x = random_data(&mut r, 40, 5);
    let omega = empirical_abs_means(&x);
    let s = [3.7, 1.0, 0.2, 11.0, 1.0];
    let scaled = empirical_abs_means(&x.scale_columns(&s));
    for k in 0..5 {
        assert!((scaled[k] - s[k] * omega[k]).abs() <= 4.0 * f64::EPSILON * scaled[k]);
    }
}

#[test]
fn permutation_equivariance() {
    let mut r = rng(24);
    for _ in 0..5 {
        let x = random_data(&mut r, 30, 6);
        let perm = [3, 0, 5, 1, 4, 2];
        let rows: Vec<Vec<f64>> = x.rows().map(|row| perm.iter().map(|&p| row[p]).collect()).collect();
        let xp = Dataset::from_rows(&rows).unwrap();
        let cfg = SolverConfig {
            tol_kkt: 1e-10,
            ..SolverConfig::default()
        };
        let a = fit_linf(&x, 0.2, &cfg, false).unwrap().estimate;
        let b = fit_linf(&xp, 0.2, &cfg, false).unwrap().estimate;
        for i in 0..6 {
            for j in 0..6 {
                assert!((b.get(i, j) - a.get(perm[i], perm[j])).abs() < 1e-8);
            }
        }
    }
}

#[test]
fn l2_rotation_equivariance_and_eigen_order() {
    let mut r = rng(25);
    for trial in 0..10 {
        let d = 2 + trial % 6;
        let x = random_data(&mut r, 25, d);
        let q = random_orthogonal(&mut r, d);
        let delta = uniform(&mut r, 0.05, 1.0);
        let fit = fit_l2(&x, delta, &SolverConfig::default()).unwrap();
        let rotated = fit_l2(&x.rotate(&q), delta, &SolverConfig::default()).unwrap();
        let qcq = q.matmul(&fit.estimate.to_mat()).unwrap().matmul(&q.transpose()).unwrap();
        for i in 0..d {
            for j in 0..d {
                assert!((rotated.estimate.get(i, j) - qcq.get(i, j)).abs() < 1e-6);
            }
        }
        for w in fit.eigen_path.windows(2) {
            assert!(w[0].0 <= w[1].0 && w[0].1 >= w[1].1);
        }
    }
}

#[test]
fn shared_multiplier_objective_dominates_per_sample_dual() {
    let mut r = rng(26);
    for trial in 0..10 {
        let d = 2 + trial % 5;
        let x = random_data(&mut r, 20, d);
        let delta = uniform(&mut r, 0.1, 1.0);
        let fit = fit_l2(&x, delta, &SolverConfig::default()).unwrap();
        let per_sample = adversarial_loss(&x, &fit.estimate, PerturbationSpec::l2(delta).unwrap()).unwrap();
        assert!(fit.objective >= per_sample - 1e-9 * fit.objective.abs().max(1.0));
    }
}

#[test]
fn trace_identity_and_wasserstein_form() {
    let mut r = rng(27);
    for trial in 0..100 {
        let d = 1 + trial % 8;
        let c = random_pd(&mut r, d, 0.1);
        let top = symeig(&c).unwrap().max_value();
        let lambda = top * uniform(&mut r, 1.01, 3.0);
        let x = random_data(&mut r, 10, d);
        let a = x.second_moment();
        let resid = trace_identity_check(&c, lambda, &a).unwrap();
        assert!(resid <= 1e-9, "residual {resid}");
        let delta = uniform(&mut r, 0.05, 2.0);
        let o = objective_l2(&c, lambda, &a, delta).unwrap();
        let w = wasserstein_objective(&c, lambda, &x, delta).unwrap();
        assert!((o - w).abs() <= 1e-9 * o.abs().max(1.0), "{o} vs {w}");
    }
}

#[test]
fn l2_matches_reference_up_to_dimension_eight() {
    let mut r = rng(28);
    for d in [5, 6, 7, 8] {
        let x = random_data(&mut r, 3 * d, d);
        let delta = uniform(&mut r, 0.1, 0.8);
        let fit = fit_l2(&x, delta, &SolverConfig::default()).unwrap();
        let reference = reference_solver_l2(&x, delta).unwrap();
        assert!(fit.estimate.max_abs_diff(&reference.estimate) < 1e-4);
        assert!((fit.objective - reference.objective).abs() <= 1e-6 * fit.objective.abs().max(1.0));
    }
}
