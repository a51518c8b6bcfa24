//! Multi-cell massive-MIMO uplink with correlated Ricean fading and MRC
//! reception. The crate covers pilot-based and LOS-based channel acquisition,
//! closed-form rate expressions with their large-array limits, and
//! Monte-Carlo estimation of the same rates.
//!
//! Every numerical type is generic over [`Real`]; the aliases below fix the
//! precision for the common cases.

pub mod channel;
pub mod error;
pub mod estimator;
pub mod model;
pub mod monte_carlo;
pub mod rate_analysis;
pub mod real;
pub mod rng;
pub mod scenario;
pub mod validation;

pub use error::{Error, Result};
pub use model::Scenario;
pub use real::Real;
pub use scenario::ScenarioConfig;

pub type Scenario64 = model::Scenario<f64>;
pub type Scenario32 = model::Scenario<f32>;
pub type CorrSpectrum64 = channel::CorrSpectrum<f64>;
pub type CorrSpectrum32 = channel::CorrSpectrum<f32>;
pub type LargeScaleFading64 = scenario::LargeScaleFading<f64>;
pub type LargeScaleFading32 = scenario::LargeScaleFading<f32>;
pub type ChannelRealization64 = channel::ChannelRealization<f64>;
pub type ChannelRealization32 = channel::ChannelRealization<f32>;
pub type SinrBreakdown64 = rate_analysis::SinrBreakdown<f64>;
pub type SinrBreakdown32 = rate_analysis::SinrBreakdown<f32>;
