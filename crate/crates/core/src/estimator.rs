//! Pilot phase, LMMSE filters in the shared eigenbasis, and the LOS estimator.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use rand::Rng;

use crate::channel::{ChannelRealization, CorrSpectrum, RiceanFactors, SteeringMatrix};
use crate::real::{cis, Real};
use crate::scenario::LargeScaleFading;

/// Orthonormal pilots shared by every cell.
#[derive(Clone, Debug)]
pub struct PilotConfig<T: Real> {
    /// `K x K` unitary training matrix; row `k` is user `k`'s sequence.
    pub phi: DMatrix<Complex<T>>,
    pub p_pilot: T,
}

impl<T: Real> PilotConfig<T> {
    /// Normalized DFT pilots, `[Phi]_{k,t} = e^{-j 2 pi k t / K} / sqrt(K)`.
    pub fn dft(users: usize, p_pilot: T) -> Self {
        let kf = T::lit(users as f64);
        let scale = T::one() / kf.sqrt();
        let phi = DMatrix::from_fn(users, users, |k, t| {
            cis(-T::two_pi() * T::lit((k * t) as f64) / kf).scale(scale)
        });
        Self { phi, p_pilot }
    }
}

/// Eigen-domain LMMSE quantities of one user.
#[derive(Clone, Debug)]
pub struct UserFilter<T: Real> {
    /// `lambda_{1,k} / (theta_k + 1)`.
    pub beta: T,
    /// `sum_{l >= 2} lambda_{l,k}`.
    pub sharers: T,
    /// `sum_{l >= 2} lambda_{l,k}^2`.
    pub sharers_sq: T,
    /// Diagonal of `U^H Q_k U`.
    pub q: DVector<T>,
    /// `delta_{k,n} = d_n sqrt(q_n)`, the diagonal of `U^H R Q_k^{1/2} U`.
    pub delta: DVector<T>,
    /// Residual-variance diagonal `a_n`.
    pub a: DVector<T>,
    /// `b_n = a_n + delta_n^2 sum_{l >= 2} lambda_{l,k}^2`.
    pub b: DVector<T>,
}

impl<T: Real> UserFilter<T> {
    pub fn delta_sq_sum(&self) -> T {
        self.delta.iter().fold(T::zero(), |s, &d| s + d * d)
    }

    pub fn delta_quartic_sum(&self) -> T {
        self.delta.iter().fold(T::zero(), |s, &d| s + d * d * d * d)
    }

    /// `sum_n a_n delta_n^2`.
    pub fn a_delta_sq_sum(&self) -> T {
        self.a.iter().zip(self.delta.iter()).fold(T::zero(), |s, (&a, &d)| s + a * d * d)
    }
}

/// LMMSE filters of every reference-cell user.
#[derive(Clone, Debug)]
pub struct LmmseFilterBank<T: Real> {
    pub users: Vec<UserFilter<T>>,
    pub p_pilot: T,
    /// `sum_i lambda_{1,i}/(theta_i+1) + sum_{l >= 2} sum_i lambda_{l,i}`.
    pub scattered_total: T,
}

impl<T: Real> LmmseFilterBank<T> {
    pub fn new(
        spectrum: &CorrSpectrum<T>,
        fading: &LargeScaleFading<T>,
        ricean: &RiceanFactors<T>,
        p_pilot: T,
    ) -> Self {
        let users = fading.users();
        let scattered_total = (0..users)
            .fold(T::zero(), |s, i| s + fading.own(i) * ricean.scatter_fraction(i))
            + fading.interfering_total();
        let d: Vec<T> = spectrum.clamped().collect();
        let inv_p = T::one() / p_pilot;
        let users = (0..users)
            .map(|k| {
                let beta = fading.own(k) * ricean.scatter_fraction(k);
                let sharers = fading.pilot_sharers(k);
                let sharers_sq = fading.pilot_sharers_sq(k);
                let c = beta + sharers;
                let q = DVector::from_iterator(d.len(), d.iter().map(|&dn| T::one() / (c * dn + inv_p)));
                let delta = DVector::from_iterator(d.len(), d.iter().zip(q.iter()).map(|(&dn, &qn)| dn * qn.sqrt()));
                let a = DVector::from_iterator(
                    d.len(),
                    d.iter().zip(delta.iter()).map(|(&dn, &dl)| {
                        scattered_total * dn - (beta * beta + sharers_sq) * dl * dl
                    }),
                );
                let b = DVector::from_iterator(
                    d.len(),
                    a.iter().zip(delta.iter()).map(|(&an, &dl)| an + sharers_sq * dl * dl),
                );
                UserFilter {
                    beta,
                    sharers,
                    sharers_sq,
                    q,
                    delta,
                    a,
                    b,
                }
            })
            .collect();
        Self {
            users,
            p_pilot,
            scattered_total,
        }
    }
}

/// `Q_k = (lambda_{1,k} R/(theta_k+1) + sum_{l>=2} lambda_{l,k} R + I/p_P)^{-1}`
/// assembled from its eigen-diagonal, together with `delta_k`.
pub fn q_matrix<T: Real>(
    spectrum: &CorrSpectrum<T>,
    fading: &LargeScaleFading<T>,
    ricean: &RiceanFactors<T>,
    p_pilot: T,
    k: usize,
) -> (DMatrix<Complex<T>>, DVector<T>) {
    let c = fading.own(k) * ricean.scatter_fraction(k) + fading.pilot_sharers(k);
    let inv_p = T::one() / p_pilot;
    let q = spectrum.matrix_function(|dn| T::one() / (c * dn + inv_p));
    let delta = DVector::from_iterator(
        spectrum.antennas(),
        spectrum.clamped().map(|dn| dn / (c * dn + inv_p).sqrt()),
    );
    (q, delta)
}

/// Prior variance scale of the channel being estimated: `lambda_{1,k}/(theta_k+1)`
/// for the reference cell, `lambda_{l,k}` otherwise.
pub fn prior_scale<T: Real>(fading: &LargeScaleFading<T>, ricean: &RiceanFactors<T>, l: usize, k: usize) -> T {
    if l == 0 {
        fading.own(k) * ricean.scatter_fraction(k)
    } else {
        fading.lambda[(l, k)]
    }
}

/// Eigen-diagonal of the estimation-error covariance of `g_{l,k}`:
/// `s d_n - s^2 d_n^2 q_n` with `s` the prior scale.
pub fn error_variance_diag<T: Real>(
    spectrum: &CorrSpectrum<T>,
    bank: &LmmseFilterBank<T>,
    fading: &LargeScaleFading<T>,
    ricean: &RiceanFactors<T>,
    l: usize,
    k: usize,
) -> DVector<T> {
    let s = prior_scale(fading, ricean, l, k);
    let f = &bank.users[k];
    DVector::from_iterator(
        spectrum.antennas(),
        spectrum.clamped().zip(f.q.iter()).map(|(dn, &qn)| s * dn - s * s * dn * dn * qn),
    )
}

/// Estimation-error covariance of `g_{l,k}`, an `N x N` Hermitian matrix.
#[derive(Clone, Debug)]
pub struct ErrorCovariance<T: Real> {
    pub matrix: DMatrix<Complex<T>>,
}

pub fn error_covariance<T: Real>(
    spectrum: &CorrSpectrum<T>,
    bank: &LmmseFilterBank<T>,
    fading: &LargeScaleFading<T>,
    ricean: &RiceanFactors<T>,
    l: usize,
    k: usize,
) -> ErrorCovariance<T> {
    let s = prior_scale(fading, ricean, l, k);
    let c = bank.users[k].beta + bank.users[k].sharers;
    let inv_p = T::one() / bank.p_pilot;
    ErrorCovariance {
        matrix: spectrum.matrix_function(|dn| s * dn - s * s * dn * dn / (c * dn + inv_p)),
    }
}

/// Channel estimates held by the reference BS.
#[derive(Clone, Debug)]
pub struct EstimatedChannel<T: Real> {
    /// `g_hat[l]` is `N x K`; the LOS estimator only fills the reference cell.
    pub g_hat: Vec<DMatrix<Complex<T>>>,
    /// Whitened observations `h_hat_k` as columns, when a pilot phase ran.
    pub h_hat: Option<DMatrix<Complex<T>>>,
    /// Scattered part `(lambda_{1,k}/(theta_k+1)) R Q_k^{1/2} h_hat_k` of the
    /// reference-cell estimate.
    pub scattered: Option<DMatrix<Complex<T>>>,
}

/// Everything the pilot phase needs besides the realization itself.
#[derive(Clone, Copy)]
pub struct PilotContext<'a, T: Real> {
    pub spectrum: &'a CorrSpectrum<T>,
    pub steering: &'a SteeringMatrix<T>,
    pub fading: &'a LargeScaleFading<T>,
    pub ricean: &'a RiceanFactors<T>,
    pub pilots: &'a PilotConfig<T>,
    pub bank: &'a LmmseFilterBank<T>,
}

/// Runs one training phase with full pilot reuse and returns the LMMSE
/// estimates of every same-pilot channel.
///
/// `Y_P = sqrt(p_P) sum_l G_l Phi^T + W_P`; the known LOS contribution is
/// removed, the result is correlated with each pilot and whitened.
pub fn run_pilot_phase<T: Real, R: Rng + ?Sized>(
    channel: &ChannelRealization<T>,
    ctx: PilotContext<'_, T>,
    rng: &mut R,
) -> EstimatedChannel<T> {
    let PilotContext {
        spectrum,
        steering,
        fading,
        ricean,
        pilots,
        bank,
    } = ctx;
    let n = spectrum.antennas();
    let users = fading.users();
    let sqrt_p = pilots.p_pilot.sqrt();
    let phi_t = pilots.phi.transpose();

    let mut y = DMatrix::zeros(n, users);
    for gl in &channel.g {
        y += gl * &phi_t;
    }
    let mut los = steering.g_bar.clone();
    for k in 0..users {
        let w = ricean.los_fraction(k).sqrt();
        los.column_mut(k).iter_mut().for_each(|z| *z = z.scale(w));
    }
    y -= &los * &phi_t;
    y *= Complex::new(sqrt_p, T::zero());
    for z in y.iter_mut() {
        *z += T::complex_gaussian(rng);
    }
    // Correlating with conj(Phi) isolates pilot k since Phi^T conj(Phi) = I.
    let y = y * pilots.phi.map(|z| z.conj());

    let y_eig = spectrum.u.ad_mul(&y);
    let mut h_eig = y_eig.clone();
    let mut s_eig = y_eig;
    for k in 0..users {
        let f = &bank.users[k];
        for r in 0..n {
            let hn = h_eig[(r, k)].scale((f.q[r] / pilots.p_pilot).sqrt());
            h_eig[(r, k)] = hn;
            s_eig[(r, k)] = hn.scale(f.delta[r]);
        }
    }
    let h_hat = &spectrum.u * h_eig;
    // R Q^{1/2} h_hat, shared by every cell up to the prior scale.
    let shaped = &spectrum.u * s_eig;

    let g_hat = (0..fading.cells())
        .map(|l| {
            let mut gl = shaped.clone();
            for k in 0..users {
                let s = prior_scale(fading, ricean, l, k);
                gl.column_mut(k).iter_mut().for_each(|z| *z = z.scale(s));
            }
            if l == 0 {
                gl += &los;
            }
            gl
        })
        .collect::<Vec<_>>();
    let mut scattered = g_hat[0].clone();
    scattered -= &los;
    EstimatedChannel {
        g_hat,
        h_hat: Some(h_hat),
        scattered: Some(scattered),
    }
}

/// Uses the deterministic LOS component as the reference-cell estimate.
pub fn los_estimate<T: Real>(steering: &SteeringMatrix<T>) -> EstimatedChannel<T> {
    EstimatedChannel {
        g_hat: vec![steering.g_bar.clone()],
        h_hat: None,
        scattered: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::exp_correlation;

    fn fading(rows: &[&[f64]]) -> LargeScaleFading<f64> {
        let l = rows.len();
        let k = rows[0].len();
        LargeScaleFading {
            lambda: DMatrix::from_fn(l, k, |i, j| rows[i][j]),
        }
    }

    #[test]
    fn dft_pilots_are_unitary() {
        let p = PilotConfig::<f64>::dft(10, 1.0);
        let g = p.phi.ad_mul(&p.phi);
        for i in 0..10 {
            for j in 0..10 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((g[(i, j)] - Complex::new(e, 0.0)).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn identity_correlation_gives_scalar_inverse() {
        let spec = exp_correlation::<f64>(4, 0.0).unwrap();
        let f = fading(&[&[2.0], &[0.3], &[0.2]]);
        let ricean = RiceanFactors { omega: vec![1.0] };
        let (q, delta) = q_matrix(&spec, &f, &ricean, 10.0, 0);
        let s = 1.0 + 0.5;
        for i in 0..4 {
            for j in 0..4 {
                let e = if i == j { 1.0 / (s + 0.1) } else { 0.0 };
                assert!((q[(i, j)].re - e).abs() < 1e-12 && q[(i, j)].im.abs() < 1e-12);
            }
            assert!((delta[i] - 1.0 / (s + 0.1f64).sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn bank_matches_direct_formula_and_is_positive() {
        let spec = exp_correlation::<f64>(16, 0.7).unwrap();
        let f = fading(&[&[4.0, 4.0], &[0.1, 0.3], &[0.05, 0.02]]);
        let ricean = RiceanFactors { omega: vec![2.0, 0.0] };
        let bank = LmmseFilterBank::new(&spec, &f, &ricean, 5.0);
        for k in 0..2 {
            let (q, delta) = q_matrix(&spec, &f, &ricean, 5.0, k);
            let uf = &bank.users[k];
            let c = f.own(k) / (ricean.omega[k] + 1.0) + f.pilot_sharers(k);
            for n in 0..16 {
                let dn = spec.d[n];
                assert!((uf.delta[n] - dn / (c * dn + 0.2).sqrt()).abs() < 1e-10);
                assert!((delta[n] - uf.delta[n]).abs() < 1e-10);
                assert!(uf.a[n] >= 0.0);
                assert!(uf.q[n] > 0.0);
            }
            let eig = nalgebra::SymmetricEigen::new(q);
            assert!(eig.eigenvalues.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn infinite_pilot_power_limit() {
        let spec = exp_correlation::<f64>(8, 0.2).unwrap();
        let f = fading(&[&[4.0], &[0.1], &[0.05]]);
        let ricean = RiceanFactors { omega: vec![2.0] };
        let bank = LmmseFilterBank::new(&spec, &f, &ricean, 1e12);
        let c = 4.0 / 3.0 + 0.15;
        for n in 0..8 {
            let lim = spec.d[n] / c;
            let got = bank.users[0].delta[n].powi(2);
            assert!(((got - lim) / lim).abs() < 1e-6);
        }
    }

    #[test]
    fn error_covariance_limits() {
        let spec = exp_correlation::<f64>(6, 0.0).unwrap();
        let single = fading(&[&[3.0]]);
        let ricean = RiceanFactors { omega: vec![1.0] };
        let bank = LmmseFilterBank::new(&spec, &single, &ricean, 1e12);
        let e = error_covariance(&spec, &bank, &single, &ricean, 0, 0);
        assert!(e.matrix.iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-6);

        let spec = exp_correlation::<f64>(6, 0.4).unwrap();
        let f = fading(&[&[3.0], &[0.2]]);
        let bank = LmmseFilterBank::new(&spec, &f, &ricean, 1e-12);
        let r = spec.reconstruct();
        for l in 0..2 {
            let s = prior_scale(&f, &ricean, l, 0);
            let e = error_covariance(&spec, &bank, &f, &ricean, l, 0);
            let diff = (&e.matrix - r.scale(s)).iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(diff < 1e-6);
        }

        let bank = LmmseFilterBank::new(&spec, &f, &ricean, 2.0);
        for l in 0..2 {
            let e = error_covariance(&spec, &bank, &f, &ricean, l, 0);
            let min = nalgebra::SymmetricEigen::new(e.matrix.clone()).eigenvalues.min();
            assert!(min > -1e-10);
            let tr: f64 = (0..6).map(|i| e.matrix[(i, i)].re).sum();
            assert!(tr < prior_scale(&f, &ricean, l, 0) * 6.0);
            let diag = error_variance_diag(&spec, &bank, &f, &ricean, l, 0);
            assert!((diag.sum() - tr).abs() < 1e-10);
        }
    }
}
