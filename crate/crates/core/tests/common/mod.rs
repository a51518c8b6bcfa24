#![allow(dead_code)]

use uplink_core::ScenarioConfig;

pub fn config(antennas: usize) -> ScenarioConfig {
    ScenarioConfig {
        antennas,
        ..ScenarioConfig::default()
    }
}

/// `|a - b|` in units of the combined standard error.
pub fn combined_z(a: f64, se_a: f64, b: f64, se_b: f64) -> f64 {
    (a - b).abs() / (se_a * se_a + se_b * se_b).sqrt()
}
