//! SPAD detection-event simulation.
//!
//! A pixel is a Poisson source of rate `q * flux + dark` gated by a
//! non-paralyzable dead time: after each detection the pixel is blind for
//! `dead_time`, after which the next exponential gap starts. Afterpulsing and
//! timing jitter are layered on top and can be switched off as a group with
//! [`SensorConfig::without_nuisances`].
//!
//! Each pixel draws from its own counter-based stream keyed by `(seed, row,
//! col)`, so images are bit-for-bit reproducible regardless of thread count.

mod sensor;
mod stream;

pub use sensor::{lux_to_flux, SensorConfig, PLANCK_TIMES_C};
pub use stream::{ps_to_seconds, seconds_to_ps, EventCollection, EventStream, PS_PER_SECOND};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::distributions::{sample_exponential, Rate, Seconds};
use crate::error::{Error, Result};
use crate::grid::{FluxMap, Image};
use crate::rng::pixel_stream;

/// Raw arrival process for one pixel, before jitter and quantization.
struct Arrivals<'a, R: Rng + ?Sized> {
    rate: Rate,
    config: &'a SensorConfig,
    rng: &'a mut R,
    next: f64,
}

impl<'a, R: Rng + ?Sized> Arrivals<'a, R> {
    /// `None` when the pixel never fires.
    fn start(rate: Rate, config: &'a SensorConfig, rng: &'a mut R) -> Option<Self> {
        let first = sample_exponential(rate, rng)?;
        Some(Arrivals {
            rate,
            config,
            rng,
            next: first.get(),
        })
    }

    /// Returns the next true detection time paired with its jittered record.
    fn advance(&mut self) -> (f64, f64) {
        let t = self.next;
        let jitter = if self.config.jitter_sigma > 0.0 {
            self.config.jitter_sigma * self.rng.sample::<f64, _>(StandardNormal)
        } else {
            0.0
        };
        let mut wait = sample_exponential(self.rate, self.rng).map_or(f64::INFINITY, Seconds::get);
        if self.config.afterpulse_probability > 0.0 && self.rng.random::<f64>() < self.config.afterpulse_probability {
            wait = wait.min(self.config.afterpulse_delay);
        }
        self.next = t + self.config.dead_time + wait;
        (t, t + jitter)
    }
}

/// Quantizes recorded times and repairs ordering and spacing.
///
/// Negative times and times past the exposure are dropped, the rest sorted, and
/// any detection closer than the dead time to the previously kept one is
/// discarded.
fn record(times: &[f64], exposure_ps: Option<u64>, dead_time_ps: u64) -> Vec<u64> {
    let mut ps: Vec<u64> = times
        .iter()
        .filter(|&&t| t >= 0.0)
        .map(|&t| seconds_to_ps(t))
        .filter(|&p| exposure_ps.is_none_or(|e| p <= e))
        .collect();
    ps.sort_unstable();
    let mut kept: Vec<u64> = Vec::with_capacity(ps.len());
    for p in ps {
        match kept.last() {
            Some(&last) if p <= last || p - last < dead_time_ps => {}
            _ => kept.push(p),
        }
    }
    kept
}

fn check_flux(flux: Rate, config: &SensorConfig) -> Result<Rate> {
    config.validate()?;
    config.detection_rate(flux)
}

/// Simulates one pixel over the configured exposure. `flux` is the incident
/// photon flux; quantum efficiency and dark counts are applied here.
pub fn simulate_pixel<R: Rng + ?Sized>(flux: Rate, config: &SensorConfig, rng: &mut R) -> Result<EventStream> {
    let rate = check_flux(flux, config)?;
    let exposure_ps = seconds_to_ps(config.exposure);
    let dead_time_ps = seconds_to_ps(config.dead_time);
    let Some(mut arrivals) = Arrivals::start(rate, config, rng) else {
        return EventStream::new(Some(exposure_ps), dead_time_ps, Vec::new());
    };
    let mut recorded = Vec::new();
    while arrivals.next <= config.exposure {
        recorded.push(arrivals.advance().1);
    }
    EventStream::new(
        Some(exposure_ps),
        dead_time_ps,
        record(&recorded, Some(exposure_ps), dead_time_ps),
    )
}

/// Simulates one pixel without an exposure bound until exactly `n_det`
/// detections are recorded.
pub fn simulate_fixed_count<R: Rng + ?Sized>(
    flux: Rate,
    n_det: usize,
    config: &SensorConfig,
    rng: &mut R,
) -> Result<EventStream> {
    if n_det == 0 {
        return Err(Error::input("fixed-count acquisition needs at least one detection"));
    }
    let rate = check_flux(flux, config)?;
    let dead_time_ps = seconds_to_ps(config.dead_time);
    let mut arrivals = Arrivals::start(rate, config, rng)
        .ok_or_else(|| Error::input("flux plus dark rate is zero; no detection would ever occur"))?;
    // Jitter can reorder or drop late detections, so the raw chain is extended
    // until the n-th kept time is safely earlier than anything still to come.
    let margin = 10.0 * config.jitter_sigma;
    let mut raw = Vec::with_capacity(n_det + 8);
    let mut last_true = 0.0;
    let mut target = n_det;
    loop {
        while raw.len() < target {
            let (t, jittered) = arrivals.advance();
            raw.push(jittered);
            last_true = t;
        }
        let mut kept = record(&raw, None, dead_time_ps);
        if kept.len() >= n_det && (margin == 0.0 || ps_to_seconds(kept[n_det - 1]) + margin < last_true) {
            kept.truncate(n_det);
            return EventStream::new(None, dead_time_ps, kept);
        }
        target += n_det.saturating_sub(kept.len()).max(8);
    }
}

fn check_image(image: &Image) -> Result<()> {
    match image.data().iter().position(|v| !(0.0..=1.0).contains(v)) {
        Some(i) => Err(Error::input(format!(
            "pixel ({}, {}) has value {} outside [0, 1]",
            i / image.width(),
            i % image.width(),
            image.data()[i]
        ))),
        None => Ok(()),
    }
}

fn per_pixel<F>(width: usize, height: usize, f: F) -> Result<EventCollection>
where
    F: Fn(usize, u32, u32) -> Result<EventStream> + Sync,
{
    let streams = (0..width * height)
        .into_par_iter()
        .map(|i| f(i, (i / width) as u32, (i % width) as u32))
        .collect::<Result<Vec<_>>>()?;
    EventCollection::new(width, height, streams)
}

/// Fixed-exposure simulation of a whole flux map of incident photon fluxes.
pub fn simulate_flux_map(flux: &FluxMap, config: &SensorConfig, seed: u64) -> Result<EventCollection> {
    config.validate()?;
    per_pixel(flux.width(), flux.height(), |i, row, col| {
        simulate_pixel(flux.rate(i), config, &mut pixel_stream(seed, row, col))
    })
}

/// Incident flux map for a normalized image lit at `reference_lux`.
pub fn image_flux(image: &Image, reference_lux: f64, config: &SensorConfig) -> Result<FluxMap> {
    check_image(image)?;
    let full = lux_to_flux(reference_lux, config)?.get();
    FluxMap::new(image.map(|v| full * v))
}

/// Fixed-exposure simulation of a normalized grayscale image.
pub fn simulate_image(image: &Image, reference_lux: f64, config: &SensorConfig, seed: u64) -> Result<EventCollection> {
    simulate_flux_map(&image_flux(image, reference_lux, config)?, config, seed)
}

/// Fixed-count simulation of a normalized grayscale image.
pub fn simulate_image_fixed_count(
    image: &Image,
    reference_lux: f64,
    n_det: usize,
    config: &SensorConfig,
    seed: u64,
) -> Result<EventCollection> {
    let flux = image_flux(image, reference_lux, config)?;
    config.validate()?;
    per_pixel(flux.width(), flux.height(), |i, row, col| {
        simulate_fixed_count(flux.rate(i), n_det, config, &mut pixel_stream(seed, row, col)).map_err(|e| match e {
            Error::Input(msg) => Error::input(format!("pixel ({row}, {col}): {msg}")),
            other => other,
        })
    })
}

/// Per-image detection-count statistics with a coarse histogram.
#[derive(Debug, Clone, PartialEq)]
pub struct CountSummary {
    pub pixels: usize,
    pub total: u64,
    pub min: usize,
    pub max: usize,
    pub mean: f64,
    /// `(lower, upper, pixels)` with inclusive bounds.
    pub bins: Vec<(usize, usize, usize)>,
}

impl CountSummary {
    pub fn new(events: &EventCollection, bins: usize) -> Self {
        let counts = events.counts();
        let min = counts.iter().copied().min().unwrap_or(0);
        let max = counts.iter().copied().max().unwrap_or(0);
        let total: u64 = counts.iter().map(|&c| c as u64).sum();
        let width = (max - min) / bins.max(1) + 1;
        let mut hist = Vec::new();
        let mut lower = min;
        while lower <= max {
            let upper = lower + width - 1;
            let n = counts.iter().filter(|&&c| c >= lower && c <= upper).count();
            hist.push((lower, upper, n));
            lower += width;
        }
        CountSummary {
            pixels: counts.len(),
            total,
            min,
            max,
            mean: total as f64 / counts.len().max(1) as f64,
            bins: hist,
        }
    }
}

impl std::fmt::Display for CountSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "pixels={} events={} mean={:.3} min={} max={}",
            self.pixels, self.total, self.mean, self.min, self.max
        )?;
        let peak = self.bins.iter().map(|b| b.2).max().unwrap_or(0).max(1);
        for &(lo, hi, n) in &self.bins {
            let bar = "#".repeat((40 * n).div_ceil(peak));
            writeln!(f, "{lo:>8}-{hi:<8} {n:>8} {bar}")?;
        }
        Ok(())
    }
}
