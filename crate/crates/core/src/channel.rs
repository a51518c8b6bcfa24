//! BS-side correlation, LOS steering vectors and composite channel draws.

use std::io::{Read, Write};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex;
use rand::Rng;

use crate::error::{Error, Result};
use crate::real::{cis, Real};
use crate::scenario::{LargeScaleFading, ScenarioConfig, UserPlacement};

/// Eigenvalues below this are treated as this value before taking roots.
pub const EIGEN_FLOOR: f64 = 1e-14;

/// `R = U diag(d) U^H` with eigenvalues sorted in descending order.
#[derive(Debug)]
pub struct CorrSpectrum<T: Real> {
    pub u: DMatrix<Complex<T>>,
    pub d: DVector<T>,
    pub kappa: T,
    sqrt_r: OnceLock<DMatrix<Complex<T>>>,
}

impl<T: Real> Clone for CorrSpectrum<T> {
    fn clone(&self) -> Self {
        Self {
            u: self.u.clone(),
            d: self.d.clone(),
            kappa: self.kappa,
            sqrt_r: self.sqrt_r.clone(),
        }
    }
}

impl<T: Real> CorrSpectrum<T> {
    /// Spectrum of an arbitrary Hermitian positive-definite matrix.
    pub fn from_hermitian(r: DMatrix<Complex<T>>, kappa: T) -> Self {
        let eig = SymmetricEigen::new(r);
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
        let n = order.len();
        let u = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
        let d = DVector::from_iterator(n, order.iter().map(|&j| eig.eigenvalues[j]));
        Self::from_parts(u, d, kappa)
    }

    fn from_parts(u: DMatrix<Complex<T>>, d: DVector<T>, kappa: T) -> Self {
        Self {
            u,
            d,
            kappa,
            sqrt_r: OnceLock::new(),
        }
    }

    pub fn antennas(&self) -> usize {
        self.d.len()
    }

    /// Eigenvalues clamped at [`EIGEN_FLOOR`].
    pub fn clamped(&self) -> impl Iterator<Item = T> + '_ {
        let floor = T::lit(EIGEN_FLOOR);
        self.d.iter().map(move |&v| if v < floor { floor } else { v })
    }

    /// `sqrt(d_n)` per eigen-direction, after clamping.
    pub fn sqrt_d(&self) -> DVector<T> {
        DVector::from_iterator(self.antennas(), self.clamped().map(|v| v.sqrt()))
    }

    /// `U diag(f(d)) U^H`.
    pub fn matrix_function(&self, f: impl Fn(T) -> T) -> DMatrix<Complex<T>> {
        let n = self.antennas();
        let mut scaled = self.u.clone();
        for (j, dj) in self.clamped().enumerate() {
            let s = f(dj);
            scaled.column_mut(j).iter_mut().for_each(|z| *z = z.scale(s));
        }
        let mut out = DMatrix::zeros(n, n);
        out.gemm(Complex::new(T::one(), T::zero()), &scaled, &self.u.adjoint(), Complex::new(T::zero(), T::zero()));
        out
    }

    /// `U diag(d) U^H`.
    pub fn reconstruct(&self) -> DMatrix<Complex<T>> {
        self.matrix_function(|v| v)
    }

    /// Symmetric square root `R^{1/2} = U diag(sqrt d) U^H`, computed once.
    pub fn sqrt_r(&self) -> &DMatrix<Complex<T>> {
        self.sqrt_r.get_or_init(|| self.matrix_function(|v| v.sqrt()))
    }

    /// `U^H x`.
    pub fn to_eigen(&self, x: &DVector<Complex<T>>) -> DVector<Complex<T>> {
        self.u.ad_mul(x)
    }

    /// `U x`.
    pub fn from_eigen(&self, x: &DVector<Complex<T>>) -> DVector<Complex<T>> {
        &self.u * x
    }
}

/// Exponential correlation `[R]_{m,n} = kappa^{|m-n|}`.
pub fn exp_correlation<T: Real>(antennas: usize, kappa: f64) -> Result<CorrSpectrum<T>> {
    if !(0.0..1.0).contains(&kappa) {
        return Err(Error::InvalidKappa(kappa));
    }
    if antennas == 0 {
        return Err(Error::InvalidConfig("need at least one antenna".into()));
    }
    let k = T::lit(kappa);
    if kappa == 0.0 {
        return Ok(CorrSpectrum::from_parts(
            DMatrix::identity(antennas, antennas),
            DVector::from_element(antennas, T::one()),
            k,
        ));
    }
    // R is real symmetric, so a real eigensolver suffices.
    let r = DMatrix::from_fn(antennas, antennas, |m, n| k.powi(m.abs_diff(n) as i32));
    let eig = SymmetricEigen::new(r);
    let mut order: Vec<usize> = (0..antennas).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let u = DMatrix::from_fn(antennas, antennas, |i, j| {
        Complex::new(eig.eigenvectors[(i, order[j])], T::zero())
    });
    let d = DVector::from_iterator(antennas, order.iter().map(|&j| eig.eigenvalues[j]));
    Ok(CorrSpectrum::from_parts(u, d, k))
}

type CacheSlot<T> = Arc<OnceLock<Arc<CorrSpectrum<T>>>>;

/// Shares eigendecompositions between scenarios with equal `(N, kappa)`.
pub struct SpectrumCache<T: Real> {
    entries: Mutex<HashMap<(usize, u64), CacheSlot<T>>>,
}

impl<T: Real> Default for SpectrumCache<T> {
    fn default() -> Self {
        Self {
            entries: Mutex::new(HashMap::new()),
        }
    }
}

impl<T: Real> SpectrumCache<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the cached spectrum, computing it on first use. Concurrent
    /// callers asking for the same key wait for a single computation.
    pub fn get(&self, antennas: usize, kappa: f64) -> Result<Arc<CorrSpectrum<T>>> {
        if !(0.0..1.0).contains(&kappa) {
            return Err(Error::InvalidKappa(kappa));
        }
        let slot = {
            let mut map = self.entries.lock().expect("spectrum cache poisoned");
            map.entry((antennas, kappa.to_bits())).or_default().clone()
        };
        if let Some(s) = slot.get() {
            return Ok(s.clone());
        }
        let spectrum = Arc::new(exp_correlation(antennas, kappa)?);
        Ok(slot.get_or_init(|| spectrum).clone())
    }
}

/// Ricean factors `theta_k` (linear) of the reference-cell users.
#[derive(Clone, Debug)]
pub struct RiceanFactors<T: Real> {
    pub omega: Vec<T>,
}

impl<T: Real> RiceanFactors<T> {
    pub fn from_config(config: &ScenarioConfig) -> Self {
        Self {
            omega: config.ricean_factors.iter().map(|&v| T::lit(v)).collect(),
        }
    }

    /// `theta / (theta + 1)`.
    #[inline]
    pub fn los_fraction(&self, k: usize) -> T {
        let t = self.omega[k];
        t / (t + T::one())
    }

    /// `1 / (theta + 1)`.
    #[inline]
    pub fn scatter_fraction(&self, k: usize) -> T {
        T::one() / (self.omega[k] + T::one())
    }
}

/// `g_bar` columns: `sqrt(lambda_{1,k}) e^{-j (n-1) 2 pi (d/lambda) sin theta_k}`.
#[derive(Clone, Debug)]
pub struct SteeringMatrix<T: Real> {
    pub g_bar: DMatrix<Complex<T>>,
}

/// LOS array response of the reference-cell users, scaled by path loss.
pub fn steering_matrix<T: Real>(
    fading: &LargeScaleFading<T>,
    placement: &UserPlacement<T>,
    config: &ScenarioConfig,
) -> SteeringMatrix<T> {
    let spacing = T::lit(config.d_over_lambda);
    let g_bar = DMatrix::from_fn(config.antennas, config.users, |n, k| {
        let phase = -T::lit(n as f64) * T::two_pi() * spacing * placement.arrival_angles[k].sin();
        cis(phase).scale(fading.own(k).sqrt())
    });
    SteeringMatrix { g_bar }
}

/// One draw of every cell's composite channel towards the reference BS.
#[derive(Clone, Debug)]
pub struct ChannelRealization<T: Real> {
    /// Composite channels `G_l`, `N x K`; index 0 is the reference cell.
    pub g: Vec<DMatrix<Complex<T>>>,
    /// Scattered parts `R^{1/2} H_l Lambda_l^{1/2}` before Ricean weighting.
    pub scattered: Vec<DMatrix<Complex<T>>>,
    /// Standard complex Gaussian draws `H_l`.
    pub h: Vec<DMatrix<Complex<T>>>,
}

/// Draws one realization. Reference-cell column `k` is
/// `sqrt(theta/(theta+1)) g_bar_k + sqrt(1/(theta+1)) R^{1/2} h_k sqrt(lambda)`;
/// other cells carry only the scattered term.
pub fn draw_channel<T: Real, R: Rng + ?Sized>(
    spectrum: &CorrSpectrum<T>,
    steering: &SteeringMatrix<T>,
    fading: &LargeScaleFading<T>,
    ricean: &RiceanFactors<T>,
    rng: &mut R,
) -> ChannelRealization<T> {
    let n = spectrum.antennas();
    let users = fading.users();
    let sqrt_r = spectrum.sqrt_r();
    let mut g = Vec::with_capacity(fading.cells());
    let mut scattered = Vec::with_capacity(fading.cells());
    let mut h = Vec::with_capacity(fading.cells());
    for l in 0..fading.cells() {
        let mut hl = DMatrix::zeros(n, users);
        for k in 0..users {
            for r in 0..n {
                hl[(r, k)] = T::complex_gaussian(rng);
            }
        }
        let mut sl = sqrt_r * &hl;
        for k in 0..users {
            let s = fading.lambda[(l, k)].sqrt();
            sl.column_mut(k).iter_mut().for_each(|z| *z = z.scale(s));
        }
        let gl = if l == 0 {
            let mut g0 = sl.clone();
            for k in 0..users {
                let a = ricean.los_fraction(k).sqrt();
                let b = ricean.scatter_fraction(k).sqrt();
                for r in 0..n {
                    g0[(r, k)] = steering.g_bar[(r, k)].scale(a) + sl[(r, k)].scale(b);
                }
            }
            g0
        } else {
            sl.clone()
        };
        g.push(gl);
        scattered.push(sl);
        h.push(hl);
    }
    ChannelRealization { g, scattered, h }
}

const DUMP_MAGIC: &[u8; 4] = b"MMRL";
const DUMP_VERSION: u16 = 1;

/// Writes `G_0..G_{L-1}` as little-endian `f32` (re, im) pairs, each matrix
/// row-major, after a 16-byte header: magic, version, N, K, L (all `u16`) and
/// four reserved zero bytes.
pub fn write_channel_dump<T: Real, W: Write>(real: &ChannelRealization<T>, mut out: W) -> Result<()> {
    let (n, k) = real.g.first().map(|m| m.shape()).unwrap_or((0, 0));
    let dims = [n, k, real.g.len()];
    let mut header = Vec::with_capacity(16);
    header.extend_from_slice(DUMP_MAGIC);
    header.extend_from_slice(&DUMP_VERSION.to_le_bytes());
    for d in dims {
        let d = u16::try_from(d).map_err(|_| Error::BadDump(format!("dimension {d} exceeds u16")))?;
        header.extend_from_slice(&d.to_le_bytes());
    }
    header.extend_from_slice(&[0u8; 4]);
    out.write_all(&header)?;
    let mut buf = Vec::with_capacity(n * k * 8);
    for gl in &real.g {
        buf.clear();
        for r in 0..n {
            for c in 0..k {
                let z = gl[(r, c)];
                buf.extend_from_slice(&(z.re.as_f64() as f32).to_le_bytes());
                buf.extend_from_slice(&(z.im.as_f64() as f32).to_le_bytes());
            }
        }
        out.write_all(&buf)?;
    }
    Ok(())
}

/// Reads a dump written by [`write_channel_dump`].
pub fn read_channel_dump<R: Read>(mut input: R) -> Result<Vec<DMatrix<Complex<f32>>>> {
    let mut header = [0u8; 16];
    input.read_exact(&mut header)?;
    if &header[..4] != DUMP_MAGIC {
        return Err(Error::BadDump("bad magic".into()));
    }
    let word = |i: usize| u16::from_le_bytes([header[i], header[i + 1]]) as usize;
    if word(4) != DUMP_VERSION as usize {
        return Err(Error::BadDump(format!("unsupported version {}", word(4))));
    }
    let (n, k, l) = (word(6), word(8), word(10));
    let mut body = vec![0u8; n * k * l * 8];
    input.read_exact(&mut body)?;
    let f = |off: usize| f32::from_le_bytes(body[off..off + 4].try_into().unwrap());
    Ok((0..l)
        .map(|cell| {
            DMatrix::from_fn(n, k, |r, c| {
                let off = ((cell * n + r) * k + c) * 8;
                Complex::new(f(off), f(off + 4))
            })
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{build_layout, large_scale_fading, place_users};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn max_abs_diff(a: &DMatrix<Complex<f64>>, b: &DMatrix<Complex<f64>>) -> f64 {
        a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn identity_when_uncorrelated() {
        let s = exp_correlation::<f64>(6, 0.0).unwrap();
        assert!(s.d.iter().all(|&v| v == 1.0));
        assert_eq!(s.u, DMatrix::identity(6, 6));
    }

    #[test]
    fn small_exponential_matrix() {
        let s = exp_correlation::<f64>(3, 0.2).unwrap();
        let expected = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.04, 0.2, 1.0, 0.2, 0.04, 0.2, 1.0])
            .map(|v| Complex::new(v, 0.0));
        assert!(max_abs_diff(&s.reconstruct(), &expected) < 1e-12);
    }

    #[test]
    fn two_by_two_eigenvalues() {
        let s = exp_correlation::<f64>(2, 0.5).unwrap();
        assert!((s.d[0] - 1.5).abs() < 1e-12);
        assert!((s.d[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn spectrum_invariants() {
        let s = exp_correlation::<f64>(64, 0.9).unwrap();
        let uu = &s.u * s.u.adjoint();
        assert!(max_abs_diff(&uu, &DMatrix::identity(64, 64)) < 1e-10);
        assert!((s.d.sum() - 64.0).abs() < 1e-8);
        assert!(s.d.iter().all(|&v| v > 0.0));
        assert!(s.d.as_slice().windows(2).all(|w| w[0] >= w[1]));
        let sq = s.sqrt_r();
        assert!(max_abs_diff(&(sq * sq), &s.reconstruct()) < 1e-10);
    }

    #[test]
    fn hermitian_constructor_matches_real_path() {
        let a = exp_correlation::<f64>(16, 0.6).unwrap();
        let b = CorrSpectrum::from_hermitian(a.reconstruct(), 0.6);
        for (x, y) in a.d.iter().zip(b.d.iter()) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn invalid_kappa() {
        assert!(matches!(exp_correlation::<f64>(4, 1.0), Err(Error::InvalidKappa(_))));
        assert!(matches!(exp_correlation::<f64>(4, -0.1), Err(Error::InvalidKappa(_))));
    }

    fn setup(cfg: &ScenarioConfig) -> (LargeScaleFading<f64>, UserPlacement<f64>) {
        let layout = build_layout(cfg).unwrap();
        let placement = place_users(cfg, &layout);
        let fading = large_scale_fading(cfg, &placement, &layout).unwrap();
        (fading, placement)
    }

    #[test]
    fn steering_columns() {
        let cfg = ScenarioConfig {
            antennas: 2,
            users: 2,
            tau: 2,
            ricean_factors: vec![1.0; 2],
            angle_scheme: crate::scenario::AngleScheme::Explicit(vec![0.0, -std::f64::consts::FRAC_PI_2]),
            ..Default::default()
        };
        let (fading, placement) = setup(&cfg);
        let s = steering_matrix(&fading, &placement, &cfg);
        let scale = fading.own(0).sqrt();
        assert!((s.g_bar[(0, 0)] - Complex::new(scale, 0.0)).norm() < 1e-12);
        assert!((s.g_bar[(1, 0)] - Complex::new(scale, 0.0)).norm() < 1e-12);
        // theta = -pi/2 gives phase +pi, the same point as -pi.
        assert!((s.g_bar[(1, 1)] / scale - Complex::new(-1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn steering_column_norms() {
        let cfg = ScenarioConfig {
            antennas: 37,
            ..Default::default()
        };
        let (fading, placement) = setup(&cfg);
        let s = steering_matrix(&fading, &placement, &cfg);
        for k in 0..cfg.users {
            let norm2 = s.g_bar.column(k).norm_squared();
            assert!((norm2 - 37.0 * fading.own(k)).abs() < 1e-10);
        }
    }

    #[test]
    fn pure_los_limit() {
        let cfg = ScenarioConfig {
            antennas: 16,
            ..Default::default()
        }
        .with_uniform_ricean(1e12);
        let (fading, placement) = setup(&cfg);
        let spec = exp_correlation::<f64>(16, cfg.kappa).unwrap();
        let st = steering_matrix(&fading, &placement, &cfg);
        let real = draw_channel(
            &spec,
            &st,
            &fading,
            &RiceanFactors::from_config(&cfg),
            &mut ChaCha8Rng::seed_from_u64(1),
        );
        for k in 0..cfg.users {
            let dev = (real.g[0].column(k) - st.g_bar.column(k)).norm() / st.g_bar.column(k).norm();
            assert!(dev < 1e-5, "relative deviation {dev}");
        }
    }

    #[test]
    fn dump_round_trip() {
        let cfg = ScenarioConfig {
            antennas: 5,
            users: 3,
            tau: 3,
            ricean_factors: vec![2.0; 3],
            ..Default::default()
        };
        let (fading, placement) = setup(&cfg);
        let spec = exp_correlation::<f64>(5, 0.3).unwrap();
        let st = steering_matrix(&fading, &placement, &cfg);
        let real = draw_channel(&spec, &st, &fading, &RiceanFactors::from_config(&cfg), &mut ChaCha8Rng::seed_from_u64(9));
        let mut bytes = Vec::new();
        write_channel_dump(&real, &mut bytes).unwrap();
        assert_eq!(bytes.len(), 16 + 7 * 5 * 3 * 8);
        assert_eq!(&bytes[..4], b"MMRL");
        assert_eq!(u16::from_le_bytes([bytes[6], bytes[7]]), 5);
        assert_eq!(u16::from_le_bytes([bytes[8], bytes[9]]), 3);
        assert_eq!(u16::from_le_bytes([bytes[10], bytes[11]]), 7);
        // row-major: second pair is (n = 0, k = 1) of cell 0
        let re = f32::from_le_bytes(bytes[24..28].try_into().unwrap());
        assert_eq!(re, real.g[0][(0, 1)].re as f32);
        let back = read_channel_dump(bytes.as_slice()).unwrap();
        for (a, b) in back.iter().zip(&real.g) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert_eq!(x.re, y.re as f32);
                assert_eq!(x.im, y.im as f32);
            }
        }
        bytes[0] = b'X';
        assert!(read_channel_dump(bytes.as_slice()).is_err());
    }
}
