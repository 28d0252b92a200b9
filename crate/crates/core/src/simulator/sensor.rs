use crate::distributions::{Rate, Seconds};
use crate::error::{Error, Result};

/// Planck constant times the speed of light, in J·m.
pub const PLANCK_TIMES_C: f64 = 1.986_445_86e-25;

/// Physical SPAD parameters. All quantities are SI (seconds, metres, Hz).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorConfig {
    pub quantum_efficiency: f64,
    pub dead_time: f64,
    pub exposure: f64,
    pub pixel_pitch: f64,
    pub fill_factor: f64,
    pub wavelength: f64,
    pub luminous_efficiency: f64,
    pub dark_count_rate: f64,
    pub afterpulse_probability: f64,
    pub afterpulse_delay: f64,
    pub jitter_sigma: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        SensorConfig {
            quantum_efficiency: 0.9,
            dead_time: 50e-9,
            exposure: 1e-3,
            pixel_pitch: 5e-6,
            fill_factor: 1.0,
            wavelength: 555e-9,
            luminous_efficiency: 683.0,
            dark_count_rate: 100.0,
            // Only a delay is published for afterpulsing; the probability is
            // left at zero until a value is supplied.
            afterpulse_probability: 0.0,
            afterpulse_delay: 100e-9,
            jitter_sigma: 200e-12,
        }
    }
}

impl SensorConfig {
    /// Same optics and timing with dark counts, afterpulsing and jitter off.
    pub fn without_nuisances(self) -> Self {
        SensorConfig {
            dark_count_rate: 0.0,
            afterpulse_probability: 0.0,
            jitter_sigma: 0.0,
            ..self
        }
    }

    pub fn has_nuisances(&self) -> bool {
        self.dark_count_rate > 0.0 || self.afterpulse_probability > 0.0 || self.jitter_sigma > 0.0
    }

    pub fn validate(&self) -> Result<()> {
        let fractions = [
            ("quantum_efficiency", self.quantum_efficiency),
            ("fill_factor", self.fill_factor),
            ("afterpulse_probability", self.afterpulse_probability),
        ];
        for (name, v) in fractions {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        let non_negative = [
            ("dead_time", self.dead_time),
            ("exposure", self.exposure),
            ("pixel_pitch", self.pixel_pitch),
            ("wavelength", self.wavelength),
            ("luminous_efficiency", self.luminous_efficiency),
            ("dark_count_rate", self.dark_count_rate),
            ("afterpulse_delay", self.afterpulse_delay),
            ("jitter_sigma", self.jitter_sigma),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn exposure_time(&self) -> Seconds {
        Seconds::new(self.exposure).expect("validated exposure")
    }

    pub fn dead(&self) -> Seconds {
        Seconds::new(self.dead_time).expect("validated dead time")
    }

    /// Detection rate `q * flux + dark` for an incident photon flux.
    pub fn detection_rate(&self, flux: Rate) -> Result<Rate> {
        Rate::new(self.quantum_efficiency * flux.get() + self.dark_count_rate)
    }
}

/// Incident photon flux on one pixel for a given illuminance.
///
/// Illuminance is converted to optical power density through the luminous
/// efficacy, then to photons through the photon energy at `wavelength`, and
/// finally scaled by the light-sensitive pixel area.
pub fn lux_to_flux(lux: f64, config: &SensorConfig) -> Result<Rate> {
    if !(lux.is_finite() && lux >= 0.0) {
        return Err(Error::domain(format!("illuminance must be finite and >= 0, got {lux}")));
    }
    if config.luminous_efficiency <= 0.0 || config.wavelength <= 0.0 {
        return Err(Error::config("luminous efficiency and wavelength must be positive"));
    }
    let photon_energy = PLANCK_TIMES_C / config.wavelength;
    let area = config.pixel_pitch * config.pixel_pitch * config.fill_factor;
    Rate::new(lux * area / (config.luminous_efficiency * photon_energy))
}
