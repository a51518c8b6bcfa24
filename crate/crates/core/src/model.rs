//! A fully resolved scenario: geometry, correlation spectrum, LOS steering,
//! pilots and LMMSE filters, plus eigen-frame projections shared by the
//! closed forms and the Monte-Carlo engine.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex;
use rand::Rng;

use crate::channel::{
    draw_channel, exp_correlation, steering_matrix, ChannelRealization, CorrSpectrum, RiceanFactors,
    SpectrumCache, SteeringMatrix,
};
use crate::error::{Error, Result};
use crate::estimator::{LmmseFilterBank, PilotConfig, PilotContext};
use crate::real::Real;
use crate::scenario::{build_layout, large_scale_fading, place_users, LargeScaleFading, ScenarioConfig, UserPlacement};

#[derive(Clone, Debug)]
pub struct Scenario<T: Real> {
    pub config: ScenarioConfig,
    pub placement: UserPlacement<T>,
    pub fading: LargeScaleFading<T>,
    pub spectrum: Arc<CorrSpectrum<T>>,
    pub steering: SteeringMatrix<T>,
    pub ricean: RiceanFactors<T>,
    pub pilots: PilotConfig<T>,
    pub bank: LmmseFilterBank<T>,
    /// Effective data power after any power scaling.
    pub p_u: T,
    /// Effective pilot power after any power scaling.
    pub p_pilot: T,
    /// `U^H g_bar_k` as columns.
    pub v: DMatrix<Complex<T>>,
    /// `g_bar_k^H g_bar_i`.
    pub gram: DMatrix<Complex<T>>,
}

impl<T: Real> Scenario<T> {
    /// Validates `config` and builds every derived quantity.
    pub fn build(config: &ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let spectrum = Arc::new(exp_correlation(config.antennas, config.kappa)?);
        Self::with_spectrum(config, spectrum)
    }

    /// Like [`Scenario::build`] but takes the spectrum from `cache`.
    pub fn build_cached(config: &ScenarioConfig, cache: &SpectrumCache<T>) -> Result<Self> {
        config.validate()?;
        let spectrum = cache.get(config.antennas, config.kappa)?;
        Self::with_spectrum(config, spectrum)
    }

    fn with_spectrum(config: &ScenarioConfig, spectrum: Arc<CorrSpectrum<T>>) -> Result<Self> {
        let layout = build_layout::<T>(config)?;
        let placement = place_users(config, &layout);
        let fading = large_scale_fading(config, &placement, &layout)?;
        Self::from_parts(config, placement, fading, spectrum)
    }

    /// Assembles a scenario from externally supplied geometry, e.g. a
    /// single-cell fading matrix that the hexagonal layout cannot produce.
    pub fn from_parts(
        config: &ScenarioConfig,
        placement: UserPlacement<T>,
        fading: LargeScaleFading<T>,
        spectrum: Arc<CorrSpectrum<T>>,
    ) -> Result<Self> {
        if spectrum.antennas() != config.antennas
            || fading.users() != config.users
            || placement.arrival_angles.len() != config.users
        {
            return Err(Error::DimensionMismatch(format!(
                "N = {}, K = {} but spectrum has {} antennas, fading {} users, placement {} angles",
                config.antennas,
                config.users,
                spectrum.antennas(),
                fading.users(),
                placement.arrival_angles.len()
            )));
        }
        let (p_u, p_pilot) = config.effective_powers();
        let (p_u, p_pilot) = (T::lit(p_u), T::lit(p_pilot));
        let steering = steering_matrix(&fading, &placement, config);
        let ricean = RiceanFactors::from_config(config);
        let pilots = PilotConfig::dft(config.users, p_pilot);
        let bank = LmmseFilterBank::new(&spectrum, &fading, &ricean, p_pilot);
        let v = spectrum.u.ad_mul(&steering.g_bar);
        let gram = steering.g_bar.ad_mul(&steering.g_bar);
        Ok(Self {
            config: config.clone(),
            placement,
            fading,
            spectrum,
            steering,
            ricean,
            pilots,
            bank,
            p_u,
            p_pilot,
            v,
            gram,
        })
    }

    pub fn antennas(&self) -> usize {
        self.spectrum.antennas()
    }

    pub fn users(&self) -> usize {
        self.fading.users()
    }

    pub fn cells(&self) -> usize {
        self.fading.cells()
    }

    /// `(T - K)/T`.
    pub fn pilot_prefactor(&self) -> T {
        T::lit(self.config.pilot_prefactor())
    }

    pub fn pilot_context(&self) -> PilotContext<'_, T> {
        PilotContext {
            spectrum: &self.spectrum,
            steering: &self.steering,
            fading: &self.fading,
            ricean: &self.ricean,
            pilots: &self.pilots,
            bank: &self.bank,
        }
    }

    /// Draws one channel realization in the antenna domain.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> ChannelRealization<T> {
        draw_channel(&self.spectrum, &self.steering, &self.fading, &self.ricean, rng)
    }

    /// `sum_n w_n |v_{i,n}|^2` for eigen-domain weights `w`.
    pub fn weighted_los_energy(&self, i: usize, weights: impl Iterator<Item = T>) -> T {
        self.v
            .column(i)
            .iter()
            .zip(weights)
            .fold(T::zero(), |s, (z, w)| s + w * z.norm_sqr())
    }

    /// `g_bar_k^H R g_bar_k`.
    pub fn los_correlation_energy(&self, k: usize) -> T {
        self.weighted_los_energy(k, self.spectrum.clamped())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimension_mismatch_is_reported() {
        let cfg = ScenarioConfig {
            antennas: 8,
            ..Default::default()
        };
        let scn = Scenario::<f64>::build(&cfg).unwrap();
        let spec = Arc::new(exp_correlation::<f64>(9, 0.2).unwrap());
        assert!(matches!(
            Scenario::from_parts(&cfg, scn.placement.clone(), scn.fading.clone(), spec),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn cache_shares_spectra() {
        let cache = SpectrumCache::<f64>::new();
        let a = cache.get(16, 0.2).unwrap();
        let b = cache.get(16, 0.2).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        let c = cache.get(16, 0.3).unwrap();
        assert!(!Arc::ptr_eq(&a, &c));
        assert!(cache.get(16, 1.5).is_err());
    }

    #[test]
    fn projections_preserve_energy() {
        let cfg = ScenarioConfig {
            antennas: 24,
            kappa: 0.5,
            ..Default::default()
        };
        let scn = Scenario::<f64>::build(&cfg).unwrap();
        for k in 0..cfg.users {
            let e = scn.weighted_los_energy(k, std::iter::repeat(1.0));
            assert!((e - 24.0 * scn.fading.own(k)).abs() < 1e-9);
            assert!((scn.gram[(k, k)].re - e).abs() < 1e-9);
        }
    }
}
