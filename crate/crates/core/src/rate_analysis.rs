//! Closed-form and asymptotic SINR expressions for MRC with pilot-based LMMSE
//! estimates and with the LOS component used as the estimate.

use nalgebra::DMatrix;
use num_complex::Complex;
use serde::Serialize;

use crate::channel::{CorrSpectrum, RiceanFactors};
use crate::error::{Error, Result};
use crate::estimator::UserFilter;
use crate::model::Scenario;
use crate::real::{cis, Real};
use crate::scenario::LargeScaleFading;

/// Below this `|1 - e^{j phi}|` the geometric-series kernel takes its limit `N`.
pub const RHO_LIMIT_THRESHOLD: f64 = 1e-12;

/// Signal and interference powers of the LMMSE/MRC approximation.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SinrBreakdown<T: Real> {
    pub s_los: T,
    pub s_ray: T,
    pub i_los: T,
    pub i_ray: T,
    pub sinr: T,
    pub rate_prefactor: T,
}

impl<T: Real> SinrBreakdown<T> {
    fn new(s_los: T, s_ray: T, i_los: T, i_ray: T, rate_prefactor: T) -> Self {
        Self {
            s_los,
            s_ray,
            i_los,
            i_ray,
            sinr: (s_los + s_ray) / (i_los + i_ray),
            rate_prefactor,
        }
    }

    /// `prefactor * log2(1 + sinr)`.
    pub fn rate(&self) -> T {
        self.rate_prefactor * log2_1p(self.sinr)
    }
}

/// `log2(1 + x)`.
pub fn log2_1p<T: Real>(x: T) -> T {
    x.ln_1p() / T::ln_2()
}

/// The LMMSE interference split into the three expectation groups of the
/// derivation: other-pilot users plus estimation error, same-pilot users in
/// other cells, and receiver noise. They sum to `i_los + i_ray`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct InterferenceSplit<T: Real> {
    pub sigma_interf: T,
    pub pilot_peer_interf: T,
    pub noise_power: T,
}

fn filter_sums<T: Real>(f: &UserFilter<T>) -> (T, T) {
    (f.delta_sq_sum(), f.delta_quartic_sum())
}

/// `sum_n delta_{k,n}^2 |x_n|^2`.
fn delta_weighted<T: Real>(scn: &Scenario<T>, k: usize, i: usize) -> T {
    scn.weighted_los_energy(i, scn.bank.users[k].delta.iter().map(|&d| d * d))
}

/// Four-term SINR approximation of user `k` under pilot-based LMMSE
/// estimation and MRC, with prefactor `(T - K)/T`.
pub fn lmmse_sinr<T: Real>(scn: &Scenario<T>, k: usize) -> SinrBreakdown<T> {
    let n = T::lit(scn.antennas() as f64);
    let f = &scn.bank.users[k];
    let lambda = scn.fading.own(k);
    let theta = scn.ricean.omega[k];
    let w = scn.ricean.los_fraction(k);
    let beta = f.beta;
    let beta2 = beta * beta;
    let p_u = scn.p_u;
    let (sd2, sd4) = filter_sums(f);
    let p_own = delta_weighted(scn, k, k);
    let two = T::lit(2.0);

    let s_los = beta2 * (two * w * (n * lambda * sd2 + p_own) + theta * theta * n * n);
    let s_ray = beta2 * beta2 * (sd4 + sd2 * sd2);

    let mut i_los = scn.weighted_los_energy(k, f.b.iter().copied());
    let mut peer_los = T::zero();
    let mut peer_proj = T::zero();
    for i in 0..scn.users() {
        if i != k {
            let wi = scn.ricean.los_fraction(i);
            peer_los += wi * scn.gram[(k, i)].norm_sqr();
            peer_proj += wi * delta_weighted(scn, k, i);
        }
    }
    i_los = w * (i_los + peer_los) + beta2 * peer_proj + theta * n * lambda / ((theta + T::one()) * p_u);
    let i_ray = beta2 * (f.a_delta_sq_sum() + f.sharers_sq * (sd4 + sd2 * sd2) + sd2 / p_u);

    SinrBreakdown::new(s_los, s_ray, i_los, i_ray, scn.pilot_prefactor())
}

pub fn lmmse_interference_split<T: Real>(scn: &Scenario<T>, k: usize) -> InterferenceSplit<T> {
    let b = lmmse_sinr(scn, k);
    let f = &scn.bank.users[k];
    let n = T::lit(scn.antennas() as f64);
    let w = scn.ricean.los_fraction(k);
    let (sd2, sd4) = filter_sums(f);
    let beta2 = f.beta * f.beta;
    let pilot_peer_interf = f.sharers_sq * (beta2 * (sd4 + sd2 * sd2) + w * delta_weighted(scn, k, k));
    let noise_power = (beta2 * sd2 + w * scn.fading.own(k) * n) / scn.p_u;
    InterferenceSplit {
        sigma_interf: b.i_los + b.i_ray - pilot_peer_interf - noise_power,
        pilot_peer_interf,
        noise_power,
    }
}

/// Large-`N` limit of the LMMSE SINR. Without pilot-sharing cells the limit
/// diverges, which is reported as [`AsymptoticSinr::Unbounded`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum AsymptoticSinr<T> {
    Finite(T),
    Unbounded,
}

impl<T: Real> AsymptoticSinr<T> {
    pub fn finite(self) -> Option<T> {
        match self {
            Self::Finite(v) => Some(v),
            Self::Unbounded => None,
        }
    }
}

/// `(lambda_{1,k}/(theta_k+1) + theta_k/(sum_n delta_n^2 / N))^2 / sum_{l>=2} lambda_{l,k}^2`,
/// evaluated with the finite-`N` `delta` vector.
pub fn lmmse_asymptotic_sinr<T: Real>(
    delta: &[T],
    fading: &LargeScaleFading<T>,
    ricean: &RiceanFactors<T>,
    k: usize,
) -> AsymptoticSinr<T> {
    let sharers_sq = fading.pilot_sharers_sq(k);
    if sharers_sq <= T::zero() {
        return AsymptoticSinr::Unbounded;
    }
    let n = T::lit(delta.len() as f64);
    let mean_d2 = delta.iter().fold(T::zero(), |s, &d| s + d * d) / n;
    let theta = ricean.omega[k];
    let x = fading.own(k) * ricean.scatter_fraction(k) + theta / mean_d2;
    AsymptoticSinr::Finite(x * x / sharers_sq)
}

/// LMMSE SINR limit when `p_u = E_u N^{-epsilon}` and `p_P = K p_u`.
///
/// For `theta_k > 0` the limit is `N^{1-epsilon} E_u lambda theta/(theta+1)`;
/// for `theta_k = 0` it is
/// `lambda^2 / (sum lambda_l^2 + 1/(K E_u^2 N^{-2 epsilon} sum_n d_n^2))`.
pub fn lmmse_power_scaled_sinr<T: Real>(
    fading: &LargeScaleFading<T>,
    spectrum: &CorrSpectrum<T>,
    ricean: &RiceanFactors<T>,
    k: usize,
    epsilon: T,
    e_u: T,
    antennas: usize,
) -> T {
    let n = T::lit(antennas as f64);
    let lambda = fading.own(k);
    let theta = ricean.omega[k];
    if theta > T::zero() {
        los_power_scaled_sinr(fading, ricean, k, epsilon, e_u, antennas)
    } else {
        let kf = T::lit(fading.users() as f64);
        let sum_d2 = spectrum.clamped().fold(T::zero(), |s, d| s + d * d);
        let noise = T::one() / (kf * e_u * e_u * n.powf(-T::lit(2.0) * epsilon) * sum_d2);
        lambda * lambda / (fading.pilot_sharers_sq(k) + noise)
    }
}

/// `rho_{k,i} = (1 - e^{j N phi})/(1 - e^{j phi})` with
/// `phi = 2 pi (d/lambda)(sin theta_k - sin theta_i)`.
#[derive(Clone, Debug)]
pub struct RhoKernel<T: Real> {
    pub rho: DMatrix<Complex<T>>,
}

pub fn rho_kernel<T: Real>(angles: &[T], antennas: usize, d_over_lambda: f64) -> RhoKernel<T> {
    let k = angles.len();
    let n = T::lit(antennas as f64);
    let spacing = T::lit(d_over_lambda);
    let one = Complex::new(T::one(), T::zero());
    let rho = DMatrix::from_fn(k, k, |a, b| {
        let phi = T::two_pi() * spacing * (angles[a].sin() - angles[b].sin());
        let den = one - cis(phi);
        if a == b || den.norm_sqr().sqrt() < T::lit(RHO_LIMIT_THRESHOLD) {
            Complex::new(n, T::zero())
        } else {
            (one - cis(n * phi)) / den
        }
    });
    RhoKernel { rho }
}

fn rho_for<T: Real>(scn: &Scenario<T>) -> RhoKernel<T> {
    rho_kernel(&scn.placement.arrival_angles, scn.antennas(), scn.config.d_over_lambda)
}

/// Lower-bound SINR of user `k` when the LOS component serves as the channel
/// estimate. Rate prefactor is 1 since no pilots are sent.
pub fn los_sinr<T: Real>(scn: &Scenario<T>, k: usize) -> T {
    los_sinr_with(scn, &rho_for(scn), k)
}

pub fn los_sinr_with<T: Real>(scn: &Scenario<T>, rho: &RhoKernel<T>, k: usize) -> T {
    let n = T::lit(scn.antennas() as f64);
    let lambda = scn.fading.own(k);
    let w = scn.ricean.los_fraction(k);
    let num = w * (lambda * n) * (lambda * n);
    num / los_denominator(scn, rho, k)
}

/// Denominator of [`los_sinr`].
pub fn los_denominator<T: Real>(scn: &Scenario<T>, rho: &RhoKernel<T>, k: usize) -> T {
    let n = T::lit(scn.antennas() as f64);
    let lambda = scn.fading.own(k);
    let mut cross = T::zero();
    for i in 0..scn.users() {
        if i != k {
            cross += scn.ricean.los_fraction(i) * scn.fading.own(i) * rho.rho[(k, i)].norm_sqr();
        }
    }
    let grg = scn.los_correlation_energy(k);
    lambda * cross + scn.bank.scattered_total * grg + lambda * n / scn.p_u
}

/// Large-`N` form of [`los_sinr`]: numerator and denominator divided by
/// `lambda_{1,k} N`, with the vanishing `|rho|^2/N` cross terms dropped.
pub fn los_asymptotic_sinr<T: Real>(scn: &Scenario<T>, k: usize) -> T {
    let n = T::lit(scn.antennas() as f64);
    let lambda = scn.fading.own(k);
    let w = scn.ricean.los_fraction(k);
    let grg = scn.los_correlation_energy(k);
    w * lambda * n / (scn.bank.scattered_total * grg / (n * lambda) + T::one() / scn.p_u)
}

/// LOS-estimate SINR limit under `p_u = E_u N^{-epsilon}`:
/// `theta lambda E_u N^{1-epsilon}/(theta+1)`.
pub fn los_power_scaled_sinr<T: Real>(
    fading: &LargeScaleFading<T>,
    ricean: &RiceanFactors<T>,
    k: usize,
    epsilon: T,
    e_u: T,
    antennas: usize,
) -> T {
    let theta = ricean.omega[k];
    let n = T::lit(antennas as f64);
    theta * fading.own(k) * e_u * n.powf(T::one() - epsilon) / (theta + T::one())
}

/// Per-user LMMSE rates from the four-term approximation.
pub fn lmmse_rates<T: Real>(scn: &Scenario<T>) -> Vec<T> {
    (0..scn.users()).map(|k| lmmse_sinr(scn, k).rate()).collect()
}

/// Per-user LMMSE rates at the large-`N` limit; `None` when unbounded.
pub fn lmmse_asymptotic_rates<T: Real>(scn: &Scenario<T>) -> Vec<Option<T>> {
    let pre = scn.pilot_prefactor();
    (0..scn.users())
        .map(|k| {
            lmmse_asymptotic_sinr(scn.bank.users[k].delta.as_slice(), &scn.fading, &scn.ricean, k)
                .finite()
                .map(|s| pre * log2_1p(s))
        })
        .collect()
}

/// Per-user LOS-estimate rates (lower bound, prefactor 1).
pub fn los_rates<T: Real>(scn: &Scenario<T>) -> Vec<T> {
    let rho = rho_for(scn);
    (0..scn.users()).map(|k| log2_1p(los_sinr_with(scn, &rho, k))).collect()
}

pub fn los_asymptotic_rates<T: Real>(scn: &Scenario<T>) -> Vec<T> {
    (0..scn.users()).map(|k| log2_1p(los_asymptotic_sinr(scn, k))).collect()
}

/// Expectations sampled by the Monte-Carlo probes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Expression {
    /// `E[|g_hat_k^H g_hat_k|^2]`.
    DesiredPower,
    /// Other-pilot users of every cell plus estimation error.
    SigmaInterf,
    /// Same-pilot users of the other cells.
    PilotPeerInterf,
    /// `E[||g_hat_k||^2] / p_u`.
    NoisePower,
    /// `E[Re(g_bar_k^H g_{1,k})]`.
    LosMean,
    /// `E[|g_bar_k^H (g_{1,k} - E g_{1,k})|^2]`.
    LosOwnScatter,
    /// `sum_{i != k} E[|g_bar_k^H g_{1,i}|^2]`.
    LosIntraCell,
    /// `sum_{l >= 2} sum_i E[|g_bar_k^H g_{l,i}|^2]`.
    LosInterCell,
    /// `E[|g_bar_k^H n|^2] / p_u` with `n ~ CN(0, I)`.
    LosNoise,
}

impl Expression {
    pub const ALL: [Expression; 9] = [
        Self::DesiredPower,
        Self::SigmaInterf,
        Self::PilotPeerInterf,
        Self::NoisePower,
        Self::LosMean,
        Self::LosOwnScatter,
        Self::LosIntraCell,
        Self::LosInterCell,
        Self::LosNoise,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Self::DesiredPower => "desired_power",
            Self::SigmaInterf => "sigma_interf",
            Self::PilotPeerInterf => "pilot_peer_interf",
            Self::NoisePower => "noise_power",
            Self::LosMean => "t4_term_1",
            Self::LosOwnScatter => "t4_term_2",
            Self::LosIntraCell => "t4_term_3",
            Self::LosInterCell => "t4_term_4",
            Self::LosNoise => "t4_term_5",
        }
    }

    pub fn is_los(self) -> bool {
        matches!(
            self,
            Self::LosMean | Self::LosOwnScatter | Self::LosIntraCell | Self::LosInterCell | Self::LosNoise
        )
    }
}

impl std::str::FromStr for Expression {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.id() == s)
            .ok_or_else(|| Error::UnknownExpression(s.to_string()))
    }
}

/// Closed form of `expr` for user `k`.
pub fn expectation_closed_form<T: Real>(scn: &Scenario<T>, expr: Expression, k: usize) -> T {
    let n = T::lit(scn.antennas() as f64);
    let lambda = scn.fading.own(k);
    let w = scn.ricean.los_fraction(k);
    match expr {
        Expression::DesiredPower => {
            let b = lmmse_sinr(scn, k);
            b.s_los + b.s_ray
        }
        Expression::SigmaInterf => lmmse_interference_split(scn, k).sigma_interf,
        Expression::PilotPeerInterf => lmmse_interference_split(scn, k).pilot_peer_interf,
        Expression::NoisePower => lmmse_interference_split(scn, k).noise_power,
        Expression::LosMean => w.sqrt() * n * lambda,
        Expression::LosOwnScatter => scn.bank.users[k].beta * scn.los_correlation_energy(k),
        Expression::LosIntraCell => {
            let rho = rho_for(scn);
            let grg = scn.los_correlation_energy(k);
            (0..scn.users()).filter(|&i| i != k).fold(T::zero(), |s, i| {
                s + scn.ricean.los_fraction(i) * lambda * scn.fading.own(i) * rho.rho[(k, i)].norm_sqr()
                    + scn.bank.users[i].beta * grg
            })
        }
        Expression::LosInterCell => scn.fading.interfering_total() * scn.los_correlation_energy(k),
        Expression::LosNoise => lambda * n / scn.p_u,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::ScenarioConfig;

    fn scenario(n: usize, kappa: f64, ricean: f64) -> Scenario<f64> {
        let cfg = ScenarioConfig {
            antennas: n,
            kappa,
            ..Default::default()
        }
        .with_uniform_ricean(ricean);
        Scenario::build(&cfg).unwrap()
    }

    #[test]
    fn rho_special_values() {
        let angles = [0.3f64, -0.2, 0.3];
        let r = rho_kernel(&angles, 16, 0.5);
        for k in 0..3 {
            assert_eq!(r.rho[(k, k)], Complex::new(16.0, 0.0));
        }
        // identical angles fall back to the limit
        assert!((r.rho[(0, 2)] - Complex::new(16.0, 0.0)).norm() < 1e-9);
        for a in 0..3 {
            for b in 0..3 {
                assert!((r.rho[(a, b)] - r.rho[(b, a)].conj()).norm() < 1e-9);
                assert!(r.rho[(a, b)].norm() <= 16.0 + 1e-9);
            }
        }
        // N = 2, phi = pi: sin(pi/2) - sin(0) = 1 with d/lambda = 0.5
        let r = rho_kernel(&[std::f64::consts::FRAC_PI_2, 0.0], 2, 0.5);
        assert!(r.rho[(0, 1)].norm() < 1e-12);
    }

    #[test]
    fn gram_equals_scaled_rho() {
        let scn = scenario(40, 0.2, 2.0);
        let r = rho_for(&scn);
        for k in 0..scn.users() {
            for i in 0..scn.users() {
                let s = (scn.fading.own(k) * scn.fading.own(i)).sqrt();
                assert!((scn.gram[(k, i)] - r.rho[(k, i)] * s).norm() < 1e-9 * s * 40.0);
            }
        }
    }

    #[test]
    fn rayleigh_kills_los_terms() {
        let scn = scenario(32, 0.2, 0.0);
        for k in 0..scn.users() {
            let b = lmmse_sinr(&scn, k);
            assert_eq!(b.s_los, 0.0);
            assert_eq!(b.i_los, 0.0);
            assert_eq!(los_sinr(&scn, k), 0.0);
        }
    }

    #[test]
    fn split_sums_to_total() {
        let scn = scenario(48, 0.4, 2.0);
        for k in 0..scn.users() {
            let b = lmmse_sinr(&scn, k);
            let s = lmmse_interference_split(&scn, k);
            let total = s.sigma_interf + s.pilot_peer_interf + s.noise_power;
            assert!(((total - b.i_los - b.i_ray) / total).abs() < 1e-12);
            assert!(s.sigma_interf > 0.0);
        }
    }

    #[test]
    fn single_user_los_sinr() {
        use crate::channel::exp_correlation;
        use crate::scenario::{AngleScheme, UserPlacement};
        use std::sync::Arc;
        let cfg = ScenarioConfig {
            users: 1,
            tau: 1,
            antennas: 20,
            kappa: 0.0,
            p_u: 3.0,
            ricean_factors: vec![2.0],
            angle_scheme: AngleScheme::Explicit(vec![0.1]),
            ..Default::default()
        };
        let lambda = 5.0;
        let fading = LargeScaleFading {
            lambda: DMatrix::from_element(1, 1, lambda),
        };
        let placement = UserPlacement {
            positions: vec![vec![nalgebra::Vector2::new(0.5, 0.0)]],
            arrival_angles: vec![0.1],
        };
        let spec = Arc::new(exp_correlation::<f64>(20, 0.0).unwrap());
        let scn = Scenario::from_parts(&cfg, placement, fading, spec).unwrap();
        let n = 20.0;
        let expected = (2.0 / 3.0) * (lambda * n).powi(2) / (lambda * lambda * n / 3.0 + lambda * n / 3.0);
        assert!((los_sinr(&scn, 0) - expected).abs() < 1e-9 * expected);
    }

    #[test]
    fn asymptote_reductions() {
        let scn = scenario(64, 0.0, 2.0);
        for k in 0..scn.users() {
            let got = lmmse_asymptotic_sinr(scn.bank.users[k].delta.as_slice(), &scn.fading, &scn.ricean, k)
                .finite()
                .unwrap();
            let l = scn.fading.own(k);
            let t = scn.ricean.omega[k];
            let num = l + t * (scn.fading.pilot_sharers(k) + 1.0 / scn.p_pilot);
            let expected = num * num / scn.fading.pilot_sharers_sq(k);
            assert!(((got - expected) / expected).abs() < 1e-10);
        }
        let single = LargeScaleFading {
            lambda: DMatrix::from_element(1, 1, 2.0),
        };
        let r = RiceanFactors { omega: vec![1.0] };
        assert_eq!(lmmse_asymptotic_sinr(&[1.0, 1.0], &single, &r, 0), AsymptoticSinr::Unbounded);
    }

    #[test]
    fn asymptote_increases_with_ricean_factor() {
        let base = scenario(128, 0.2, 0.0);
        let mut last = 0.0;
        for t in [0.0, 1.0, 3.0, 10.0] {
            let ricean = RiceanFactors {
                omega: vec![t; base.users()],
            };
            let bank = crate::estimator::LmmseFilterBank::new(&base.spectrum, &base.fading, &ricean, base.p_pilot);
            let v = lmmse_asymptotic_sinr(bank.users[0].delta.as_slice(), &base.fading, &ricean, 0)
                .finite()
                .unwrap();
            assert!(v > last);
            last = v;
        }
    }

    #[test]
    fn delta_sandwich() {
        let scn = scenario(96, 0.6, 2.0);
        for k in 0..scn.users() {
            let f = &scn.bank.users[k];
            let c = f.beta + f.sharers;
            let mean = f.delta_sq_sum() / 96.0;
            assert!(1.0 / c > mean);
            assert!(mean >= 1.0 / (c + 1.0 / scn.p_pilot));
        }
    }

    #[test]
    fn los_identity_correlation_asymptote() {
        let scn = scenario(64, 0.0, 2.0);
        for k in 0..scn.users() {
            let l = scn.fading.own(k);
            let w = scn.ricean.los_fraction(k);
            let expected = w * l * 64.0 / (scn.bank.scattered_total + 1.0 / scn.p_u);
            assert!((los_asymptotic_sinr(&scn, k) - expected).abs() < 1e-10 * expected);
        }
    }

    #[test]
    fn power_scaling_limits() {
        let scn = scenario(64, 0.2, 2.0);
        let a = lmmse_power_scaled_sinr(&scn.fading, &scn.spectrum, &scn.ricean, 0, 1.0, 100.0, 64);
        let b = lmmse_power_scaled_sinr(&scn.fading, &scn.spectrum, &scn.ricean, 0, 1.0, 100.0, 4096);
        assert_eq!(a, b);
        let c = los_power_scaled_sinr(&scn.fading, &scn.ricean, 0, 2.0, 100.0, 64);
        let d = los_power_scaled_sinr(&scn.fading, &scn.ricean, 0, 2.0, 100.0, 256);
        assert!((c / d - 4.0).abs() < 1e-12);
    }

    #[test]
    fn expression_ids_round_trip() {
        for e in Expression::ALL {
            assert_eq!(e.id().parse::<Expression>().unwrap(), e);
        }
        assert!(matches!("bogus".parse::<Expression>(), Err(Error::UnknownExpression(_))));
    }
}
