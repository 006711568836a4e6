mod common;

use common::*;
use pertprec::matrix::{cholesky, inverse_pd, logdet_pd, symeig};

#[test]
fn logdet_matches_eigenvalue_product() {
    let mut r = rng(1);
    for trial in 0..100 {
        let d = 1 + trial % 20;
        let m = random_pd(&mut r, d, 0.2);
        let e = symeig(&m).unwrap();
        let log_prod: f64 = e.values.iter().map(|v| v.ln()).sum();
        let ld = logdet_pd(&m);
        assert!(
            ((ld.exp() - log_prod.exp()) / log_prod.exp()).abs() < 1e-8,
            "d = {d}: {ld} vs {log_prod}"
        );
    }
}

#[test]
fn cholesky_round_trip() {
    let mut r = rng(2);
    for trial in 0..100 {
        let d = 1 + trial % 20;
        let m = random_pd(&mut r, d, 0.05);
        let back = cholesky(&m).unwrap().reconstruct();
        assert!(back.max_abs_diff(&m) <= 1e-10 * m.max_norm());
    }
}

#[test]
fn double_inverse_round_trip() {
    let mut r = rng(3);
    for trial in 0..100 {
        let d = 1 + trial % 20;
        let m = random_pd(&mut r, d, 0.1);
        let back = inverse_pd(&inverse_pd(&m).unwrap()).unwrap();
        assert!(back.max_abs_diff(&m) <= 1e-6 * m.max_norm());
    }
}
