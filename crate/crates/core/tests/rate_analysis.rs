mod common;

use common::config;
use uplink_core::rate_analysis::{
    lmmse_asymptotic_rates, lmmse_interference_split, lmmse_rates, lmmse_sinr, los_asymptotic_sinr, los_rates,
    los_sinr, rho_kernel,
};
use uplink_core::{Scenario32, Scenario64};

#[test]
fn single_and_double_precision_agree() {
    let cfg = config(64);
    let a = Scenario64::build(&cfg).unwrap();
    let b = Scenario32::build(&cfg).unwrap();
    for (x, y) in lmmse_rates(&a).iter().zip(lmmse_rates(&b)) {
        assert!((x - y as f64).abs() / x < 1e-4, "{x} vs {y}");
    }
    for (x, y) in los_rates(&a).iter().zip(los_rates(&b)) {
        assert!((x - y as f64).abs() / x < 1e-4, "{x} vs {y}");
    }
}

#[test]
fn more_power_never_hurts() {
    let low = Scenario64::build(&config(128)).unwrap();
    let mut cfg = config(128);
    cfg.p_u *= 10.0;
    cfg.p_pilot *= 10.0;
    let high = Scenario64::build(&cfg).unwrap();
    for k in 0..low.users() {
        assert!(lmmse_sinr(&high, k).sinr > lmmse_sinr(&low, k).sinr);
        assert!(los_sinr(&high, k) > los_sinr(&low, k));
    }
}

#[test]
fn breakdown_is_consistent() {
    let scn = Scenario64::build(&config(128)).unwrap();
    for k in 0..scn.users() {
        let b = lmmse_sinr(&scn, k);
        let ratio = (b.s_los + b.s_ray) / (b.i_los + b.i_ray);
        assert!((ratio - b.sinr).abs() / b.sinr < 1e-12);
        let split = lmmse_interference_split(&scn, k);
        let total = split.sigma_interf + split.pilot_peer_interf + split.noise_power;
        assert!((total - (b.i_los + b.i_ray)).abs() / total < 1e-12);
    }
}

#[test]
fn closed_forms_approach_their_limits() {
    let gaps = |n: usize| {
        let scn = Scenario64::build(&config(n)).unwrap();
        let rates = lmmse_rates(&scn);
        let lmmse: Vec<f64> = lmmse_asymptotic_rates(&scn)
            .into_iter()
            .enumerate()
            .map(|(k, lim)| {
                let lim = lim.unwrap();
                assert!(rates[k] < lim, "N={n} user {k}: {} vs {lim}", rates[k]);
                (lim - rates[k]) / lim
            })
            .collect();
        let los: Vec<f64> = (0..scn.users())
            .map(|k| (los_sinr(&scn, k) - los_asymptotic_sinr(&scn, k)).abs() / los_asymptotic_sinr(&scn, k))
            .collect();
        (lmmse, los)
    };
    let (lmmse_small, _) = gaps(128);
    let (lmmse_large, los_large) = gaps(1024);
    for k in 0..lmmse_small.len() {
        assert!(lmmse_large[k] < lmmse_small[k], "user {k}");
        assert!(los_large[k] < 0.01, "user {k}: {}", los_large[k]);
    }
}

#[test]
fn rho_kernel_is_hermitian_with_n_on_the_diagonal() {
    let angles = [-1.2, -0.3, 0.0, 0.4, 1.1];
    let rho = rho_kernel::<f64>(&angles, 40, 0.5).rho;
    for a in 0..5 {
        assert!((rho[(a, a)].re - 40.0).abs() < 1e-12);
        for b in 0..5 {
            assert!((rho[(a, b)] - rho[(b, a)].conj()).norm() < 1e-9);
            assert!(rho[(a, b)].norm() <= 40.0 + 1e-9);
        }
    }
}
