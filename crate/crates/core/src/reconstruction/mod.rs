//! Flux-map reconstruction: per-pixel maximum likelihood and diffusion
//! posterior sampling guided by the exact event-stream likelihood.
//!
//! The sampler works in the normalized image domain `x ∈ [-1, 1]`. Each reverse
//! step evaluates the prior score, forms the Tweedie estimate `x̂0`, takes an
//! ancestral step, and then nudges the state along the likelihood gradient
//! evaluated at the flux `a (clip(x̂0) + b)`. The gradient is taken with respect
//! to the flux directly; it is not propagated through the prior score.

mod prior;
pub mod protocol;
mod remote;
mod schedule;
mod transform;

pub use prior::{laplacian, GaussianPrior, PriorScore, SmoothnessPrior, StepContext};
pub use remote::{Endpoint, RemotePrior};
pub use schedule::ScheduleSet;
pub use transform::{domain_adapt, inverse_adapt, DomainTransform};

use std::str::FromStr;
use std::time::Duration;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{FluxMap, Image};
use crate::likelihood::{grad_log_likelihood_map, mle_map, sufficient_stats, MleFlag};
use crate::rng::{stream, RandomSource};
use crate::simulator::EventCollection;

/// `x̂0 = (x + (1 - ᾱ) s) / sqrt(ᾱ)`.
pub fn tweedie_estimate(state: &Image, score: &Image, alpha_bar: f64) -> Result<Image> {
    let scale = alpha_bar.sqrt();
    let noise = 1.0 - alpha_bar;
    state.zip_map(score, |x, s| (x + noise * s) / scale)
}

/// Mixing coefficients `(c_x, c_0)` of the reverse step `k -> k - 1`.
///
/// `c_x = sqrt(1 - β_k) (1 - ᾱ_{k-1}) / (1 - ᾱ_k)` and
/// `c_0 = sqrt(ᾱ_{k-1}) β_k / (1 - ᾱ_k)`; a noiseless step keeps the state.
pub fn ancestral_coefficients(schedule: &ScheduleSet, k: usize) -> (f64, f64) {
    let alpha_bar = schedule.alpha_bar();
    let beta = schedule.beta()[k];
    let noise = 1.0 - alpha_bar[k];
    if noise <= 0.0 {
        return (1.0, 0.0);
    }
    let prev = alpha_bar[k - 1];
    ((1.0 - beta).sqrt() * (1.0 - prev) / noise, prev.sqrt() * beta / noise)
}

/// `x'_{k-1} = c_x x_k + c_0 x̂0 + σ_k z`.
pub fn ancestral_step(x_k: &Image, x_hat0: &Image, schedule: &ScheduleSet, k: usize, noise: &Image) -> Result<Image> {
    if k == 0 || k >= schedule.len() {
        return Err(Error::input(format!(
            "ancestral step index {k} outside 1..{}",
            schedule.len()
        )));
    }
    x_k.check_shape(x_hat0, "ancestral step estimate")?;
    x_k.check_shape(noise, "ancestral step noise")?;
    let (cx, c0) = ancestral_coefficients(schedule, k);
    let sigma = schedule.sigma()[k];
    let mixed = x_k.zip_map(x_hat0, |x, x0| cx * x + c0 * x0)?;
    mixed.zip_map(noise, |m, z| m + sigma * z)
}

/// How the likelihood gradient is weighted before it is added to the state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GuidanceScaling {
    /// Per pixel `σ_k² a J / (1 + I r_k)`. `J = ∂x̂0/∂x` comes from the prior
    /// (flat-prior value `1 / sqrt(ᾱ_k)` otherwise), `I = a² D / λ` is the
    /// expected Fisher information in the normalized domain over the live time
    /// `D`, and `r_k = (1 - ᾱ_k) J / sqrt(ᾱ_k)` is the variance of `x0` given
    /// the state. For a Gaussian prior and likelihood this is the exact
    /// posterior correction to the score.
    #[default]
    Variance,
    /// `1 / ‖g‖₂` over the valid pixels.
    GradientNorm,
    /// The chain-rule factor `a` alone.
    Plain,
}

impl FromStr for GuidanceScaling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "variance" => Ok(GuidanceScaling::Variance),
            "gradient-norm" => Ok(GuidanceScaling::GradientNorm),
            "plain" => Ok(GuidanceScaling::Plain),
            other => Err(Error::config(format!(
                "unknown guidance scaling {other}; expected variance, gradient-norm or plain"
            ))),
        }
    }
}

/// Schedule values at the step being guided.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuidanceContext<'a> {
    pub alpha_bar: f64,
    pub sigma: f64,
    pub scaling: GuidanceScaling,
    /// Per-pixel `∂x̂0/∂x` from [`PriorScore::tweedie_gain`].
    pub gain: Option<&'a Image>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceOutcome {
    pub state: Image,
    /// Pixels that recorded detections at zero flux and were left unchanged.
    pub masked: usize,
}

/// Moves `x'` up the log-likelihood: `x = x' + ρ_k w g`, with `g` the
/// per-pixel gradient at `domain_adapt(x̂0)` and `w > 0` from the scaling rule.
pub fn guidance_step(
    x_prime: &Image,
    streams: &EventCollection,
    x_hat0: &Image,
    transform: &DomainTransform,
    rho_k: f64,
    ctx: &GuidanceContext<'_>,
) -> Result<GuidanceOutcome> {
    x_prime.check_shape(x_hat0, "guidance estimate")?;
    if let Some(gain) = ctx.gain {
        x_prime.check_shape(gain, "guidance gain")?;
    }
    let flux = domain_adapt(x_hat0, transform)?;
    let grad = grad_log_likelihood_map(streams, &flux)?;
    let masked = grad.invalid_count();
    if rho_k == 0.0 {
        return Ok(GuidanceOutcome {
            state: x_prime.clone(),
            masked,
        });
    }
    let a = transform.a();
    let g = grad.gradient.data();
    let lambda = flux.image().data();
    let weights: Vec<f64> = match ctx.scaling {
        GuidanceScaling::Variance => {
            let root = ctx.alpha_bar.sqrt();
            streams
                .streams()
                .par_iter()
                .zip(lambda.par_iter())
                .enumerate()
                .map(|(i, (s, &lam))| {
                    if lam <= 0.0 {
                        return 0.0;
                    }
                    let j = ctx.gain.map_or(1.0 / root, |g| g.data()[i]).max(0.0);
                    let info = a * a * sufficient_stats(s).live_time / lam;
                    let posterior_variance = (1.0 - ctx.alpha_bar) * j / root;
                    ctx.sigma * ctx.sigma * a * j / (1.0 + info * posterior_variance)
                })
                .collect()
        }
        GuidanceScaling::GradientNorm => {
            let norm = g
                .iter()
                .zip(&grad.invalid)
                .filter(|(_, &bad)| !bad)
                .map(|(v, _)| v * v)
                .sum::<f64>()
                .sqrt();
            let w = if norm > 0.0 { 1.0 / norm } else { 0.0 };
            vec![w; g.len()]
        }
        GuidanceScaling::Plain => vec![a; g.len()],
    };
    let data = x_prime
        .data()
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            if grad.invalid[i] {
                x
            } else {
                x + rho_k * weights[i] * g[i]
            }
        })
        .collect();
    Ok(GuidanceOutcome {
        state: Image::new(x_prime.width(), x_prime.height(), data)?,
        masked,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub flux: FluxMap,
    /// Final clean-image estimate, clipped to `[-1, 1]`.
    pub estimate: Image,
    /// Masked-pixel updates summed over all steps.
    pub masked_updates: usize,
}

/// Stream id for the sampler's own noise, disjoint from pixel streams whose
/// ids never exceed `2^64 - 2^32`.
const SAMPLER_STREAM: u64 = u64::MAX;

fn normal_image(width: usize, height: usize, rng: &mut RandomSource) -> Image {
    let data = (0..width * height).map(|_| rng.sample(StandardNormal)).collect();
    Image::new(width, height, data).expect("positive dimensions")
}

fn abort(step: usize, message: impl Into<String>) -> Error {
    Error::Reconstruction {
        step,
        message: message.into(),
    }
}

/// Diffusion posterior sampling over all `K` steps of `schedule`.
///
/// The state starts as standard normal noise drawn from `seed`; steps run
/// `k = K-1, ..., 1` and step 0 only forms the final estimate, which is
/// clipped and mapped to flux.
pub fn dps_reconstruct(
    streams: &EventCollection,
    prior: &dyn PriorScore,
    transform: &DomainTransform,
    schedule: &ScheduleSet,
    scaling: GuidanceScaling,
    seed: u64,
) -> Result<Reconstruction> {
    let (width, height) = (streams.width(), streams.height());
    let mut rng = stream(seed, SAMPLER_STREAM);
    let mut x = normal_image(width, height, &mut rng);
    let mut masked_updates = 0;
    for k in (0..schedule.len()).rev() {
        let alpha_bar = schedule.alpha_bar()[k];
        let score = prior
            .score(&x, &StepContext { k, alpha_bar })
            .map_err(|e| abort(k, format!("prior {} failed: {e}", prior.describe())))?;
        if !score.same_shape(&x) {
            return Err(abort(
                k,
                format!("prior returned shape {:?} for state {:?}", score.shape(), x.shape()),
            ));
        }
        let x_hat0 = tweedie_estimate(&x, &score, alpha_bar)?;
        if !x_hat0.is_finite() {
            return Err(abort(k, "clean-image estimate is not finite"));
        }
        let clipped = x_hat0.map(|v| v.clamp(-1.0, 1.0));
        if k == 0 {
            return Ok(Reconstruction {
                flux: domain_adapt(&clipped, transform)?,
                estimate: clipped,
                masked_updates,
            });
        }
        let noise = normal_image(width, height, &mut rng);
        let x_prime = ancestral_step(&x, &x_hat0, schedule, k, &noise)?;
        let step = StepContext { k, alpha_bar };
        let gain = match scaling {
            GuidanceScaling::Variance => prior.tweedie_gain(&x, &step),
            _ => None,
        };
        let ctx = GuidanceContext {
            alpha_bar,
            sigma: schedule.sigma()[k],
            scaling,
            gain: gain.as_ref(),
        };
        let guided = guidance_step(&x_prime, streams, &clipped, transform, schedule.rho()[k], &ctx)?;
        masked_updates += guided.masked;
        if !guided.state.is_finite() {
            return Err(abort(k, "state became non-finite after guidance"));
        }
        x = guided.state;
    }
    Err(abort(0, "empty schedule"))
}

/// Runs [`dps_reconstruct`] once per seed, in parallel unless the prior is
/// serial. Results are in seed order.
pub fn dps_reconstruct_seeds(
    streams: &EventCollection,
    prior: &dyn PriorScore,
    transform: &DomainTransform,
    schedule: &ScheduleSet,
    scaling: GuidanceScaling,
    seeds: &[u64],
) -> Result<Vec<Reconstruction>> {
    let run = |&seed: &u64| dps_reconstruct(streams, prior, transform, schedule, scaling, seed);
    if prior.is_serial() {
        seeds.iter().map(run).collect()
    } else {
        seeds.par_iter().map(run).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MleReconstruction {
    /// Per-pixel estimate; pixels without a finite estimate hold 0.
    pub flux: FluxMap,
    pub flags: Vec<MleFlag>,
}

/// Per-pixel closed-form maximum likelihood.
pub fn mle_reconstruct(streams: &EventCollection) -> MleReconstruction {
    let (image, flags) = mle_map(streams);
    let cleaned = image.map(|v| if v.is_finite() { v } else { 0.0 });
    MleReconstruction {
        flux: FluxMap::new(cleaned).expect("estimates are finite and non-negative"),
        flags,
    }
}

/// Prior selected by a textual spec: `gaussian:MEAN,STD`, `smooth:WEIGHT` or
/// `remote:ADDRESS`.
pub fn parse_prior(spec: &str) -> Result<Box<dyn PriorScore>> {
    let (kind, args) = spec
        .split_once(':')
        .ok_or_else(|| Error::config(format!("prior spec {spec} lacks a kind prefix")))?;
    let number = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::config(format!("cannot parse {s:?} in prior spec {spec}")))
    };
    match kind {
        "gaussian" => {
            let (mean, std) = args
                .split_once(',')
                .ok_or_else(|| Error::config(format!("gaussian prior needs MEAN,STD, got {args}")))?;
            Ok(Box::new(GaussianPrior::new(number(mean)?, number(std)?)?))
        }
        "smooth" => Ok(Box::new(SmoothnessPrior::new(number(args)?)?)),
        "remote" => {
            let prior = RemotePrior::new(args.parse()?, RemotePrior::DEFAULT_TIMEOUT);
            prior.connect()?;
            Ok(Box::new(prior))
        }
        other => Err(Error::config(format!("unknown prior kind {other}"))),
    }
}

/// Remote prior with an explicit timeout.
pub fn remote_prior(address: &str, timeout: Duration) -> Result<RemotePrior> {
    let prior = RemotePrior::new(address.parse()?, timeout);
    prior.connect()?;
    Ok(prior)
}
