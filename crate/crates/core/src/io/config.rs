//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key has a default
//! and unknown keys are rejected. Times are in seconds, lengths in metres and
//! rates in events per second.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::reconstruction::{DomainTransform, GuidanceScaling, ScheduleSet};
use crate::simulator::{lux_to_flux, SensorConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AcquisitionMode {
    FixedExposure,
    /// Unbounded exposure, stopped after this many detections per pixel.
    FixedCount(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub sensor: SensorConfig,
    /// When false, dark counts, afterpulsing and jitter are disabled.
    pub nuisances: bool,
    pub reference_lux: f64,
    pub seed: u64,
    pub mode: AcquisitionMode,
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub rho: f64,
    pub guidance: GuidanceScaling,
    /// Flux per normalized unit; derived from `reference_lux` when unset.
    pub transform_a: Option<f64>,
    pub transform_b: f64,
    pub prior: String,
    /// Pixels per Monte-Carlo check in `verify`.
    pub mc_pixels: usize,
    /// Negative control for `verify`: perturbs the Erlang CDF used by its checks.
    pub corrupt_cdf: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            sensor: SensorConfig::default(),
            nuisances: true,
            reference_lux: 0.4,
            seed: 0,
            mode: AcquisitionMode::FixedExposure,
            steps: ScheduleSet::DEFAULT_STEPS,
            beta_start: ScheduleSet::DEFAULT_BETA_START,
            beta_end: ScheduleSet::DEFAULT_BETA_END,
            rho: 1.0,
            guidance: GuidanceScaling::Variance,
            transform_a: None,
            transform_b: 1.0,
            prior: "gaussian:0,0.5".to_string(),
            mc_pixels: 100_000,
            corrupt_cdf: false,
        }
    }
}

pub const KEYS: &[&str] = &[
    "quantum_efficiency",
    "dead_time",
    "exposure",
    "pixel_pitch",
    "fill_factor",
    "wavelength",
    "luminous_efficiency",
    "dark_count_rate",
    "afterpulse_probability",
    "afterpulse_delay",
    "jitter_sigma",
    "nuisances",
    "reference_lux",
    "seed",
    "mode",
    "detections",
    "steps",
    "beta_start",
    "beta_end",
    "rho",
    "guidance",
    "transform_a",
    "transform_b",
    "prior",
    "mc_pixels",
    "verify_corrupt_cdf",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(format!("cannot parse {value:?} for {key}")))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected key = value", i + 1)))?;
            config
                .set(key.trim(), value.trim())
                .map_err(|e| Error::config(format!("line {}: {e}", i + 1)))?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        RunConfig::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let s = &mut self.sensor;
        match key {
            "quantum_efficiency" => s.quantum_efficiency = parse(key, value)?,
            "dead_time" => s.dead_time = parse(key, value)?,
            "exposure" => s.exposure = parse(key, value)?,
            "pixel_pitch" => s.pixel_pitch = parse(key, value)?,
            "fill_factor" => s.fill_factor = parse(key, value)?,
            "wavelength" => s.wavelength = parse(key, value)?,
            "luminous_efficiency" => s.luminous_efficiency = parse(key, value)?,
            "dark_count_rate" => s.dark_count_rate = parse(key, value)?,
            "afterpulse_probability" => s.afterpulse_probability = parse(key, value)?,
            "afterpulse_delay" => s.afterpulse_delay = parse(key, value)?,
            "jitter_sigma" => s.jitter_sigma = parse(key, value)?,
            "nuisances" => self.nuisances = parse(key, value)?,
            "reference_lux" => self.reference_lux = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "mode" => {
                self.mode = match value {
                    "fixed-exposure" => AcquisitionMode::FixedExposure,
                    "fixed-count" => match self.mode {
                        AcquisitionMode::FixedCount(n) => AcquisitionMode::FixedCount(n),
                        AcquisitionMode::FixedExposure => AcquisitionMode::FixedCount(1000),
                    },
                    other => return Err(Error::config(format!("unknown mode {other}"))),
                }
            }
            "detections" => {
                let n: usize = parse(key, value)?;
                if n == 0 {
                    return Err(Error::config("detections must be at least 1"));
                }
                self.mode = AcquisitionMode::FixedCount(n);
            }
            "steps" => self.steps = parse(key, value)?,
            "beta_start" => self.beta_start = parse(key, value)?,
            "beta_end" => self.beta_end = parse(key, value)?,
            "rho" => self.rho = parse(key, value)?,
            "guidance" => self.guidance = value.parse()?,
            "transform_a" => self.transform_a = Some(parse(key, value)?),
            "transform_b" => self.transform_b = parse(key, value)?,
            "prior" => self.prior = value.to_string(),
            "mc_pixels" => self.mc_pixels = parse(key, value)?,
            "verify_corrupt_cdf" => self.corrupt_cdf = parse(key, value)?,
            other => return Err(Error::config(format!("unknown key {other}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.sensor.validate()?;
        if !(self.reference_lux.is_finite() && self.reference_lux >= 0.0) {
            return Err(Error::config(format!(
                "reference_lux must be >= 0, got {}",
                self.reference_lux
            )));
        }
        if self.mode == AcquisitionMode::FixedExposure && self.sensor.exposure <= 0.0 {
            return Err(Error::config("fixed-exposure mode needs a positive exposure"));
        }
        if self.mc_pixels == 0 {
            return Err(Error::config("mc_pixels must be positive"));
        }
        Ok(())
    }

    /// Sensor parameters with the nuisance switch applied.
    pub fn effective_sensor(&self) -> SensorConfig {
        if self.nuisances {
            self.sensor
        } else {
            self.sensor.without_nuisances()
        }
    }

    pub fn schedule(&self) -> Result<ScheduleSet> {
        ScheduleSet::linear(self.steps, self.beta_start, self.beta_end, self.rho)
    }

    /// The configured transform, or one mapping `[-1, 1]` onto the detection
    /// rate range `[0, q Φ(reference_lux)]`.
    pub fn transform(&self) -> Result<DomainTransform> {
        let a = match self.transform_a {
            Some(a) => a,
            None => {
                let full = self.sensor.quantum_efficiency * lux_to_flux(self.reference_lux, &self.sensor)?.get();
                full / 2.0
            }
        };
        DomainTransform::new(a, self.transform_b)
    }
}
