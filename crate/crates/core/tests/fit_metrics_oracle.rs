mod common;

use common::oracles::*;
use pisr::benchharness::fit_metrics;
use rand::Rng;

#[test]
fn matches_direct_summation_on_random_vectors() {
    let mut r = common::rng(11);
    for _ in 0..1000 {
        let truth: Vec<f64> = (0..10).map(|_| r.random_range(-100.0..100.0)).collect();
        let pred: Vec<f64> = (0..10).map(|_| r.random_range(-100.0..100.0)).collect();
        let m = fit_metrics(&pred, &truth).unwrap();
        let (mae, mse, r2) = oracle_fit_metrics(&pred, &truth);
        assert!(rel_close(m.mae, mae, 1e-12), "{} {}", m.mae, mae);
        assert!(rel_close(m.mse, mse, 1e-12), "{} {}", m.mse, mse);
        assert!(rel_close(m.r2, r2, 1e-12), "{} {}", m.r2, r2);
    }
}

#[test]
fn definitional_cases() {
    let truth = [1.0, 2.0, 3.0];
    let m = fit_metrics(&truth, &truth).unwrap();
    assert_eq!((m.mae, m.mse, m.r2), (0.0, 0.0, 1.0));
    let m = fit_metrics(&[2.0, 2.0, 2.0], &truth).unwrap();
    assert_eq!(m.r2, 0.0);
    let m = fit_metrics(&[1.0, 2.0, 4.0], &truth).unwrap();
    assert!((m.mae - 1.0 / 3.0).abs() < 1e-15);
    assert!((m.mse - 1.0 / 3.0).abs() < 1e-15);
    assert!((m.r2 - 0.5).abs() < 1e-15);
    assert!(fit_metrics(&[1.0, 2.0], &[5.0, 5.0]).is_err());
    assert!(fit_metrics(&[1.0], &[1.0]).is_err());
}
