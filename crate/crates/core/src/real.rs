//! Scalar abstraction shared by every numerical routine in the crate.
//!
//! All geometry, filter algebra and Monte-Carlo accumulation is written once
//! against [`Real`]; `f64` is the reference precision and `f32` is supported
//! for fast sweeps.

use nalgebra::RealField;
use num_complex::Complex;
use num_traits::{FromPrimitive, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Real floating-point scalar usable by the channel, estimator and rate code.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive {
    /// Draws one sample from N(0, 1).
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Converts an `f64` literal into this precision.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }

    /// Circularly-symmetric complex Gaussian with unit variance
    /// (real and imaginary parts i.i.d. N(0, 1/2)).
    #[inline]
    fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex<Self> {
        let s = Self::lit(std::f64::consts::FRAC_1_SQRT_2);
        Complex::new(
            Self::standard_normal(rng) * s,
            Self::standard_normal(rng) * s,
        )
    }
}

impl Real for f64 {
    #[inline]
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}

impl Real for f32 {
    #[inline]
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}

/// `e^{j phase}` without requiring `num_traits::Float`.
#[inline]
pub fn cis<T: Real>(phase: T) -> Complex<T> {
    Complex::new(phase.cos(), phase.sin())
}

/// `|z|`.
#[inline]
pub fn cabs<T: Real>(z: Complex<T>) -> T {
    z.norm_sqr().sqrt()
}
