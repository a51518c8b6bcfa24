mod common;

use std::sync::Arc;

use common::config;
use nalgebra::DMatrix;
use num_complex::Complex;
use uplink_core::channel::exp_correlation;
use uplink_core::estimator::run_pilot_phase;
use uplink_core::rng::{stream, Domain};
use uplink_core::scenario::LargeScaleFading;
use uplink_core::Scenario64;

fn relative_error(scn: &Scenario64, trials: u64) -> f64 {
    let mut worst: f64 = 0.0;
    for t in 0..trials {
        let mut rng = stream(3, Domain::Trial, t);
        let real = scn.draw(&mut rng);
        let est = run_pilot_phase(&real, scn.pilot_context(), &mut rng);
        let e = (&real.g[0] - &est.g_hat[0]).norm() / real.g[0].norm();
        worst = worst.max(e);
    }
    worst
}

#[test]
fn single_cell_noiseless_training_recovers_channel() {
    let mut cfg = config(16);
    cfg.p_pilot = 1e14;
    let full = Scenario64::build(&cfg).unwrap();
    let fading = LargeScaleFading {
        lambda: full.fading.lambda.rows(0, 1).into_owned(),
    };
    let spectrum = Arc::new(exp_correlation(16, cfg.kappa).unwrap());
    let scn = Scenario64::from_parts(&cfg, full.placement.clone(), fading, spectrum).unwrap();
    assert_eq!(scn.cells(), 1);
    assert!(relative_error(&scn, 20) < 1e-5);
}

#[test]
fn dominant_los_makes_estimate_exact() {
    let cfg = config(16).with_uniform_ricean(1e12);
    let scn = Scenario64::build(&cfg).unwrap();
    assert!(relative_error(&scn, 20) < 1e-5);
}

#[test]
fn whitened_observations_have_identity_covariance() {
    let scn = Scenario64::build(&config(8)).unwrap();
    let trials = 20_000;
    let k = 1;
    let mut acc = DMatrix::<Complex<f64>>::zeros(8, 8);
    for t in 0..trials {
        let mut rng = stream(4, Domain::Trial, t);
        let real = scn.draw(&mut rng);
        let est = run_pilot_phase(&real, scn.pilot_context(), &mut rng);
        let h = est.h_hat.unwrap().column(k).into_owned();
        acc += &h * h.adjoint();
    }
    let cov = acc / Complex::new(trials as f64, 0.0);
    let tol = 5.0 / (trials as f64).sqrt();
    for i in 0..8 {
        for j in 0..8 {
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((cov[(i, j)] - Complex::new(want, 0.0)).norm() < tol, "({i},{j}) {}", cov[(i, j)]);
        }
    }
}

#[test]
fn los_estimate_is_the_steering_matrix() {
    let scn = Scenario64::build(&config(8)).unwrap();
    let est = uplink_core::estimator::los_estimate(&scn.steering);
    assert_eq!(est.g_hat.len(), 1);
    assert_eq!(est.g_hat[0], scn.steering.g_bar);
    assert!(est.h_hat.is_none());
}
