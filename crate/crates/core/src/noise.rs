//! Receiver noise: shot noise from signal and background photocurrent plus
//! thermal noise of the load resistor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Elementary charge in coulombs.
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// Boltzmann constant in J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Background photocurrent from ambient light, amps.
    pub background_current: f64,
    pub temperature: f64,
    pub load_resistance: f64,
    pub bandwidth: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            background_current: 100e-6,
            temperature: 298.0,
            load_resistance: 50.0,
            bandwidth: 10e9,
        }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("background_current_a", self.background_current),
            ("temperature_k", self.temperature),
            ("load_resistance_ohm", self.load_resistance),
            ("bandwidth_hz", self.bandwidth),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config_key(key, format!("must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn thermal_variance(&self) -> f64 {
        4.0 * BOLTZMANN * self.temperature * self.bandwidth / self.load_resistance
    }

    pub fn shot_variance(&self, responsivity: f64, received_power: f64) -> f64 {
        2.0 * ELEMENTARY_CHARGE * (responsivity * received_power + self.background_current) * self.bandwidth
    }
}

/// Noise current variance σ² in A² for a receiver collecting
/// `received_power` watts of signal light.
pub fn noise_variance(model: &NoiseModel, responsivity: f64, received_power: f64) -> Result<f64> {
    if !(model.bandwidth.is_finite() && model.bandwidth > 0.0) {
        return Err(Error::config_key(
            "bandwidth_hz",
            format!("must be > 0, got {}", model.bandwidth),
        ));
    }
    if !(received_power >= 0.0) {
        return Err(Error::Parameter(format!(
            "received optical power must be >= 0, got {received_power}"
        )));
    }
    Ok(model.shot_variance(responsivity, received_power) + model.thermal_variance())
}
