//! Monte-Carlo rate estimation and expectation probes.
//!
//! The engine works in the eigenbasis of `R`: with `x' = U^H x`, a scattered
//! channel `R^{1/2} h sqrt(s)` becomes `sqrt(s d) .* h'` with `h'` again
//! standard complex Gaussian, and every MRC inner product is unchanged. This
//! keeps a trial at `O(N K L)` work. [`lmmse_trial_direct`] runs the same
//! trial in the antenna domain for cross-checking.

use nalgebra::DVector;
use num_complex::Complex;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimator::{error_variance_diag, run_pilot_phase};
use crate::model::Scenario;
use crate::rate_analysis::Expression;
use crate::real::Real;
use crate::rng::{stream, Domain};

/// Smallest trial count accepted by the rate estimators.
pub const MIN_RATE_TRIALS: usize = 100;

/// Sample mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub trials: usize,
    pub seed: u64,
}

impl McEstimate {
    /// Mean and `sample_std / sqrt(n)` of `samples`.
    pub fn from_samples(samples: impl IntoIterator<Item = f64>, seed: u64) -> Self {
        let v: Vec<f64> = samples.into_iter().collect();
        let n = v.len();
        let mean = v.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            mean,
            std_error: (var / n as f64).sqrt(),
            trials: n,
            seed,
        }
    }

    /// `|mean - reference|` in units of the standard error.
    pub fn z_score(&self, reference: f64) -> f64 {
        let d = (self.mean - reference).abs();
        if self.std_error == 0.0 {
            if d == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            d / self.std_error
        }
    }
}

/// Per-user and sum rates.
#[derive(Clone, Debug, Serialize)]
pub struct McRates {
    pub per_user: Vec<McEstimate>,
    pub sum: McEstimate,
}

/// Exact rate next to the ratio-of-expectations approximation, both from the
/// same samples.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct LemmaGap {
    pub exact: f64,
    pub approx: f64,
    pub relative: f64,
}

/// Runs `trials` independent trials on the rayon pool. Trial `t` draws from
/// its own stream, so results do not depend on the thread count.
pub fn run_trials<R, F>(trials: usize, seed: u64, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(&mut ChaCha8Rng) -> R + Sync,
{
    (0..trials)
        .into_par_iter()
        .map(|t| f(&mut stream(seed, Domain::Trial, t as u64)))
        .collect()
}

/// Splits the trials into `workers` contiguous blocks, each run sequentially
/// as one task, and concatenates the blocks in order.
pub fn run_trials_partitioned<R, F>(trials: usize, seed: u64, workers: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(&mut ChaCha8Rng) -> R + Sync,
{
    let workers = workers.max(1);
    let block = trials.div_ceil(workers);
    let blocks: Vec<Vec<R>> = (0..workers)
        .into_par_iter()
        .map(|w| {
            let start = (w * block).min(trials);
            let end = ((w + 1) * block).min(trials);
            (start..end)
                .map(|t| f(&mut stream(seed, Domain::Trial, t as u64)))
                .collect()
        })
        .collect();
    blocks.into_iter().flatten().collect()
}

/// Per-user instantaneous quantities of one LMMSE trial.
#[derive(Clone, Debug)]
pub struct LmmseTrial {
    /// `|g_hat_k^H g_hat_k|^2`.
    pub desired: Vec<f64>,
    /// Other-pilot users of all cells plus `g_hat^H C g_hat`.
    pub sigma: Vec<f64>,
    /// Same-pilot users of the other cells.
    pub peer: Vec<f64>,
    /// `||g_hat_k||^2 / p_u`.
    pub noise: Vec<f64>,
}

impl LmmseTrial {
    fn with_users(k: usize) -> Self {
        Self {
            desired: vec![0.0; k],
            sigma: vec![0.0; k],
            peer: vec![0.0; k],
            noise: vec![0.0; k],
        }
    }

    pub fn interference(&self, k: usize) -> f64 {
        self.sigma[k] + self.peer[k] + self.noise[k]
    }

    pub fn sinr(&self, k: usize) -> f64 {
        self.desired[k] / self.interference(k)
    }
}

/// Per-user samples of the LOS-estimate bound terms for one trial.
#[derive(Clone, Debug)]
pub struct LosTrial {
    /// `Re(g_bar_k^H g_{1,k})`.
    pub mean_term: Vec<f64>,
    pub own_scatter: Vec<f64>,
    pub intra_cell: Vec<f64>,
    pub inter_cell: Vec<f64>,
    pub noise: Vec<f64>,
}

impl LosTrial {
    pub fn denominator(&self, k: usize) -> f64 {
        self.own_scatter[k] + self.intra_cell[k] + self.inter_cell[k] + self.noise[k]
    }
}

/// Quantities shared by every trial of one scenario, in the eigen domain.
pub struct Engine<'a, T: Real> {
    scn: &'a Scenario<T>,
    n: usize,
    sqrt_d: Vec<T>,
    /// Diagonal of the summed estimation-error covariance.
    c_tot: Vec<T>,
    /// `sqrt(theta/(theta+1)) U^H g_bar_k`, column-major `N x K`.
    los: Vec<Complex<T>>,
    /// `sqrt` of the prior scale of `g_{l,k}`, indexed `[l * K + k]`.
    sqrt_prior: Vec<T>,
    /// `delta_{k,n} sqrt(q_{k,n})`, mapping the de-spread pilot to `R Q^{1/2} h_hat`.
    shaping: Vec<T>,
    inv_sqrt_pilot: T,
}

fn dot<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> Complex<T> {
    a.iter()
        .zip(b)
        .fold(Complex::new(T::zero(), T::zero()), |s, (x, y)| s + x.conj() * y)
}

fn energy<T: Real>(a: &[Complex<T>]) -> T {
    a.iter().fold(T::zero(), |s, z| s + z.norm_sqr())
}

impl<'a, T: Real> Engine<'a, T> {
    pub fn new(scn: &'a Scenario<T>) -> Self {
        let n = scn.antennas();
        let users = scn.users();
        let cells = scn.cells();
        let sqrt_d: Vec<T> = scn.spectrum.sqrt_d().iter().copied().collect();
        let mut c_tot = vec![T::zero(); n];
        for l in 0..cells {
            for k in 0..users {
                let e = error_variance_diag(&scn.spectrum, &scn.bank, &scn.fading, &scn.ricean, l, k);
                for (c, v) in c_tot.iter_mut().zip(e.iter()) {
                    *c += *v;
                }
            }
        }
        let mut los = Vec::with_capacity(n * users);
        for k in 0..users {
            let w = scn.ricean.los_fraction(k).sqrt();
            los.extend(scn.v.column(k).iter().map(|z| z.scale(w)));
        }
        let sqrt_prior = (0..cells)
            .flat_map(|l| (0..users).map(move |k| (l, k)))
            .map(|(l, k)| crate::estimator::prior_scale(&scn.fading, &scn.ricean, l, k).sqrt())
            .collect();
        let shaping = (0..users)
            .flat_map(|k| {
                let f = &scn.bank.users[k];
                (0..n).map(move |r| f.delta[r] * f.q[r].sqrt())
            })
            .collect();
        Self {
            scn,
            n,
            sqrt_d,
            c_tot,
            los,
            sqrt_prior,
            shaping,
            inv_sqrt_pilot: T::one() / scn.p_pilot.sqrt(),
        }
    }

    /// One pilot phase plus the per-user MRC quantities.
    pub fn lmmse_trial<R: Rng + ?Sized>(&self, rng: &mut R) -> LmmseTrial {
        let (n, users, cells) = (self.n, self.scn.users(), self.scn.cells());
        // z_k = U^H R Q_k^{1/2} h_hat_k, from the de-spread pilot observation
        // y_k / sqrt(p_P) = sum_l (scattered g_{l,k}) + w_k / sqrt(p_P).
        let mut z = vec![Complex::new(T::zero(), T::zero()); n * users];
        for l in 0..cells {
            for k in 0..users {
                let s = self.sqrt_prior[l * users + k];
                for r in 0..n {
                    z[k * n + r] += T::complex_gaussian(rng).scale(s * self.sqrt_d[r]);
                }
            }
        }
        for k in 0..users {
            for r in 0..n {
                let noise = T::complex_gaussian(rng).scale(self.inv_sqrt_pilot);
                let idx = k * n + r;
                z[idx] = (z[idx] + noise).scale(self.shaping[idx]);
            }
        }
        let bank = &self.scn.bank.users;
        let mut g_hat = self.los.clone();
        for k in 0..users {
            let beta = bank[k].beta;
            for r in 0..n {
                g_hat[k * n + r] += z[k * n + r].scale(beta);
            }
        }
        self.lmmse_quantities(&g_hat, &z)
    }

    /// MRC quantities given eigen-domain estimates `g_hat` and shaped
    /// observations `z` (both column-major `N x K`).
    fn lmmse_quantities(&self, g_hat: &[Complex<T>], z: &[Complex<T>]) -> LmmseTrial {
        let (n, users) = (self.n, self.scn.users());
        let bank = &self.scn.bank.users;
        let inv_pu = T::one() / self.scn.p_u;
        let mut out = LmmseTrial::with_users(users);
        for k in 0..users {
            let gk = &g_hat[k * n..(k + 1) * n];
            let norm2 = energy(gk);
            let mut sigma = self
                .c_tot
                .iter()
                .zip(gk)
                .fold(T::zero(), |s, (c, g)| s + *c * g.norm_sqr());
            for i in 0..users {
                if i == k {
                    continue;
                }
                let gi = &g_hat[i * n..(i + 1) * n];
                let zi = &z[i * n..(i + 1) * n];
                sigma += dot(gk, gi).norm_sqr() + bank[i].sharers_sq * dot(gk, zi).norm_sqr();
            }
            let peer = bank[k].sharers_sq * dot(gk, &z[k * n..(k + 1) * n]).norm_sqr();
            out.desired[k] = (norm2 * norm2).as_f64();
            out.sigma[k] = sigma.as_f64();
            out.peer[k] = peer.as_f64();
            out.noise[k] = (norm2 * inv_pu).as_f64();
        }
        out
    }

    /// One channel draw and the sampled LOS-bound terms.
    pub fn los_trial<R: Rng + ?Sized>(&self, rng: &mut R) -> LosTrial {
        let (n, users, cells) = (self.n, self.scn.users(), self.scn.cells());
        let v = &self.scn.v;
        let mut out = LosTrial {
            mean_term: vec![0.0; users],
            own_scatter: vec![0.0; users],
            intra_cell: vec![0.0; users],
            inter_cell: vec![0.0; users],
            noise: vec![0.0; users],
        };
        let mut col = vec![Complex::new(T::zero(), T::zero()); n];
        let mut proj = vec![Complex::new(T::zero(), T::zero()); users];
        for l in 0..cells {
            for i in 0..users {
                let s = self.sqrt_prior[l * users + i];
                for (r, c) in col.iter_mut().enumerate() {
                    *c = T::complex_gaussian(rng).scale(s * self.sqrt_d[r]);
                }
                for (k, p) in proj.iter_mut().enumerate() {
                    *p = dot(v.column(k).as_slice(), &col);
                }
                for (k, &scattered) in proj.iter().enumerate() {
                    if l > 0 {
                        out.inter_cell[k] += scattered.norm_sqr().as_f64();
                    } else if i == k {
                        let full = scn_los_inner(self, k, i) + scattered;
                        out.mean_term[k] = full.re.as_f64();
                        out.own_scatter[k] = scattered.norm_sqr().as_f64();
                    } else {
                        let full = scn_los_inner(self, k, i) + scattered;
                        out.intra_cell[k] += full.norm_sqr().as_f64();
                    }
                }
            }
        }
        let inv_pu = T::one() / self.scn.p_u;
        for r in col.iter_mut() {
            *r = T::complex_gaussian(rng);
        }
        for k in 0..users {
            out.noise[k] = (dot(v.column(k).as_slice(), &col).norm_sqr() * inv_pu).as_f64();
        }
        out
    }
}

/// `g_bar_k^H (sqrt(w_i) g_bar_i)`.
fn scn_los_inner<T: Real>(e: &Engine<'_, T>, k: usize, i: usize) -> Complex<T> {
    e.scn.gram[(k, i)].scale(e.scn.ricean.los_fraction(i).sqrt())
}

/// The same LMMSE trial carried out in the antenna domain: full channel draw,
/// pilot phase with DFT pilots, and MRC with the error covariance rotated back.
pub fn lmmse_trial_direct<T: Real, R: Rng + ?Sized>(scn: &Scenario<T>, rng: &mut R) -> LmmseTrial {
    let channel = scn.draw(rng);
    let est = run_pilot_phase(&channel, scn.pilot_context(), rng);
    let engine = Engine::new(scn);
    let n = scn.antennas();
    let users = scn.users();
    let scattered = est.scattered.as_ref().expect("pilot phase yields scattered part");
    let mut g_hat = Vec::with_capacity(n * users);
    let mut z = Vec::with_capacity(n * users);
    for k in 0..users {
        let gk: DVector<Complex<T>> = est.g_hat[0].column(k).into_owned();
        g_hat.extend(scn.spectrum.to_eigen(&gk).iter().copied());
        let beta = scn.bank.users[k].beta;
        let zk: DVector<Complex<T>> = scattered.column(k).map(|c| c.unscale(beta));
        z.extend(scn.spectrum.to_eigen(&zk).iter().copied());
    }
    engine.lmmse_quantities(&g_hat, &z)
}

fn check_trials(trials: usize, min: usize) -> Result<()> {
    if trials < min {
        return Err(Error::InvalidConfig(format!("need at least {min} trials, got {trials}")));
    }
    Ok(())
}

/// Samples of the LMMSE trial quantities.
pub fn lmmse_samples<T: Real>(scn: &Scenario<T>, trials: usize, seed: u64) -> Vec<LmmseTrial> {
    let engine = Engine::new(scn);
    run_trials(trials, seed, |rng| engine.lmmse_trial(rng))
}

/// Samples of the LOS-bound terms.
pub fn los_samples<T: Real>(scn: &Scenario<T>, trials: usize, seed: u64) -> Vec<LosTrial> {
    let engine = Engine::new(scn);
    run_trials(trials, seed, |rng| engine.los_trial(rng))
}

/// Ergodic LMMSE/MRC rates `(T-K)/T E[log2(1 + SINR_k)]`.
pub fn mc_rate_lmmse<T: Real>(scn: &Scenario<T>, trials: usize, seed: u64) -> Result<McRates> {
    check_trials(trials, MIN_RATE_TRIALS)?;
    Ok(lmmse_rates_from(scn, &lmmse_samples(scn, trials, seed), seed))
}

/// As [`mc_rate_lmmse`] with trials split over `workers` blocks.
pub fn mc_rate_lmmse_partitioned<T: Real>(
    scn: &Scenario<T>,
    trials: usize,
    seed: u64,
    workers: usize,
) -> Result<McRates> {
    check_trials(trials, MIN_RATE_TRIALS)?;
    let engine = Engine::new(scn);
    let samples = run_trials_partitioned(trials, seed, workers, |rng| engine.lmmse_trial(rng));
    Ok(lmmse_rates_from(scn, &samples, seed))
}

pub fn lmmse_rates_from<T: Real>(scn: &Scenario<T>, samples: &[LmmseTrial], seed: u64) -> McRates {
    let pre = scn.config.pilot_prefactor();
    let users = scn.users();
    let per_user = (0..users)
        .map(|k| McEstimate::from_samples(samples.iter().map(|s| pre * s.sinr(k).ln_1p() / std::f64::consts::LN_2), seed))
        .collect();
    let sum = McEstimate::from_samples(
        samples
            .iter()
            .map(|s| (0..users).map(|k| pre * s.sinr(k).ln_1p() / std::f64::consts::LN_2).sum()),
        seed,
    );
    McRates { per_user, sum }
}

/// `E[log2(1 + X/Y)]` against `log2(1 + E[X]/E[Y])` per user, and for the
/// sum over users (last entry), without the pilot prefactor.
pub fn lemma_gap<T: Real>(scn: &Scenario<T>, trials: usize, seed: u64) -> Vec<LemmaGap> {
    let samples = lmmse_samples(scn, trials, seed);
    let users = scn.users();
    let nf = trials as f64;
    let mut out: Vec<LemmaGap> = (0..users)
        .map(|k| {
            let exact = samples.iter().map(|s| s.sinr(k).ln_1p()).sum::<f64>() / nf / std::f64::consts::LN_2;
            let ex = samples.iter().map(|s| s.desired[k]).sum::<f64>() / nf;
            let ey = samples.iter().map(|s| s.interference(k)).sum::<f64>() / nf;
            let approx = (ex / ey).ln_1p() / std::f64::consts::LN_2;
            LemmaGap {
                exact,
                approx,
                relative: (exact - approx).abs() / exact,
            }
        })
        .collect();
    let exact: f64 = out.iter().map(|g| g.exact).sum();
    let approx: f64 = out.iter().map(|g| g.approx).sum();
    out.push(LemmaGap {
        exact,
        approx,
        relative: (exact - approx).abs() / exact,
    });
    out
}

/// LOS-estimate lower bound `log2(1 + S_k / E[D_k])` with `S_k` in closed
/// form and every denominator expectation sampled. Standard errors follow
/// from the delta method applied to the sampled mean of `D_k`.
pub fn mc_rate_los<T: Real>(scn: &Scenario<T>, trials: usize, seed: u64) -> Result<McRates> {
    check_trials(trials, MIN_RATE_TRIALS)?;
    Ok(los_rates_from(scn, &los_samples(scn, trials, seed), seed))
}

pub fn los_rates_from<T: Real>(scn: &Scenario<T>, samples: &[LosTrial], seed: u64) -> McRates {
    let users = scn.users();
    let nf = samples.len() as f64;
    let n = scn.antennas() as f64;
    let mut per_user = Vec::with_capacity(users);
    // d rate_k / d D_k at the sample mean, for the linearized sum.
    let mut slope = Vec::with_capacity(users);
    for k in 0..users {
        let lambda = scn.fading.own(k).as_f64();
        let signal = scn.ricean.los_fraction(k).as_f64() * (lambda * n).powi(2);
        let d = McEstimate::from_samples(samples.iter().map(|s| s.denominator(k)), seed);
        let g = signal / (d.mean * (d.mean + signal) * std::f64::consts::LN_2);
        slope.push(g);
        per_user.push(McEstimate {
            mean: (signal / d.mean).ln_1p() / std::f64::consts::LN_2,
            std_error: g * d.std_error,
            trials: samples.len(),
            seed,
        });
    }
    let lin = McEstimate::from_samples(
        samples
            .iter()
            .map(|s| (0..users).map(|k| slope[k] * s.denominator(k)).sum::<f64>()),
        seed,
    );
    let sum = McEstimate {
        mean: per_user.iter().map(|e| e.mean).sum(),
        std_error: lin.std_error,
        trials: samples.len(),
        seed,
    };
    debug_assert!(nf > 0.0);
    McRates { per_user, sum }
}

/// Samples the expectation named by `id` for user `k`.
pub fn mc_expectation_probe<T: Real>(
    id: &str,
    scn: &Scenario<T>,
    k: usize,
    trials: usize,
    seed: u64,
) -> Result<McEstimate> {
    let expr: Expression = id.parse()?;
    check_trials(trials, 2)?;
    if k >= scn.users() {
        return Err(Error::InvalidConfig(format!("user {k} out of range")));
    }
    Ok(if expr.is_los() {
        let s = los_samples(scn, trials, seed);
        McEstimate::from_samples(
            s.iter().map(|t| match expr {
                Expression::LosMean => t.mean_term[k],
                Expression::LosOwnScatter => t.own_scatter[k],
                Expression::LosIntraCell => t.intra_cell[k],
                Expression::LosInterCell => t.inter_cell[k],
                _ => t.noise[k],
            }),
            seed,
        )
    } else {
        let s = lmmse_samples(scn, trials, seed);
        McEstimate::from_samples(
            s.iter().map(|t| match expr {
                Expression::DesiredPower => t.desired[k],
                Expression::SigmaInterf => t.sigma[k],
                Expression::PilotPeerInterf => t.peer[k],
                _ => t.noise[k],
            }),
            seed,
        )
    })
}
