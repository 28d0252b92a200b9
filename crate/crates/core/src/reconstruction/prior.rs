use crate::error::{Error, Result};
use crate::grid::Image;

/// Where in the reverse process a score is requested.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepContext {
    pub k: usize,
    /// Cumulative signal fraction at step `k`; the state is distributed as
    /// `sqrt(alpha_bar) x0 + sqrt(1 - alpha_bar) z`.
    pub alpha_bar: f64,
}

/// Score of the noised prior, `∇_x log p_k(x)`, in the normalized domain.
pub trait PriorScore: Send + Sync {
    fn score(&self, state: &Image, step: &StepContext) -> Result<Image>;

    /// Implementations that cannot serve concurrent calls return `true`; batch
    /// runs then evaluate seeds one after another.
    fn is_serial(&self) -> bool {
        false
    }

    /// Diagonal of `∂x̂0/∂x`, the sensitivity of the Tweedie estimate to the
    /// state, when the prior can supply it. Variance-scaled guidance uses it to
    /// balance the likelihood against the prior; `None` assumes a flat prior.
    fn tweedie_gain(&self, _state: &Image, _step: &StepContext) -> Option<Image> {
        None
    }

    fn describe(&self) -> String;
}

/// Independent `N(mean, std^2)` prior on every pixel.
///
/// The score is that of the noised marginal
/// `N(sqrt(ᾱ) mean, ᾱ std^2 + 1 - ᾱ)`, which reduces to `(mean - x) / std^2`
/// when `ᾱ = 1`. With `std = 0` every Tweedie estimate equals `mean`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPrior {
    mean: f64,
    std: f64,
}

impl GaussianPrior {
    pub fn new(mean: f64, std: f64) -> Result<Self> {
        if !mean.is_finite() || !(std.is_finite() && std >= 0.0) {
            return Err(Error::config(format!(
                "gaussian prior needs finite mean and std >= 0, got {mean}, {std}"
            )));
        }
        Ok(GaussianPrior { mean, std })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn std(&self) -> f64 {
        self.std
    }

    pub fn score_at(&self, x: f64, alpha_bar: f64) -> f64 {
        let variance = alpha_bar * self.std * self.std + (1.0 - alpha_bar);
        -(x - alpha_bar.sqrt() * self.mean) / variance
    }

    /// Log-density of the clean prior, up to a constant.
    pub fn log_density(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.std;
        -0.5 * z * z
    }
}

impl PriorScore for GaussianPrior {
    fn score(&self, state: &Image, step: &StepContext) -> Result<Image> {
        if step.alpha_bar >= 1.0 && self.std == 0.0 {
            return Err(Error::config("a zero-variance prior has no score at alpha_bar = 1"));
        }
        Ok(state.map(|x| self.score_at(x, step.alpha_bar)))
    }

    /// `sqrt(ᾱ) std^2 / (ᾱ std^2 + 1 - ᾱ)`, the same for every pixel.
    fn tweedie_gain(&self, state: &Image, step: &StepContext) -> Option<Image> {
        let variance = step.alpha_bar * self.std * self.std + (1.0 - step.alpha_bar);
        (variance > 0.0).then(|| state.map(|_| step.alpha_bar.sqrt() * self.std * self.std / variance))
    }

    fn describe(&self) -> String {
        format!("gaussian:{},{}", self.mean, self.std)
    }
}

/// Smoothness prior built from a one-step heat-equation denoiser.
///
/// The denoiser is `D(y) = y + w Δy` with the 5-point Laplacian and mirrored
/// edges; it is turned into a score by inverting Tweedie's relation,
/// `s = (sqrt(ᾱ) D(x / sqrt(ᾱ)) - x) / (1 - ᾱ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothnessPrior {
    weight: f64,
}

impl SmoothnessPrior {
    /// Weights above 1/8 make the denoiser amplify the highest frequencies.
    pub const MAX_WEIGHT: f64 = 0.125;

    pub fn new(weight: f64) -> Result<Self> {
        if !(0.0..=Self::MAX_WEIGHT).contains(&weight) {
            return Err(Error::config(format!(
                "smoothness weight must lie in [0, {}], got {weight}",
                Self::MAX_WEIGHT
            )));
        }
        Ok(SmoothnessPrior { weight })
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }
}

/// 5-point Laplacian with mirrored (zero-flux) boundaries.
pub fn laplacian(image: &Image) -> Image {
    let (h, w) = image.shape();
    let mut out = Vec::with_capacity(image.len());
    for r in 0..h {
        for c in 0..w {
            let centre = image.get(r, c);
            let up = image.get(r.saturating_sub(1), c);
            let down = image.get((r + 1).min(h - 1), c);
            let left = image.get(r, c.saturating_sub(1));
            let right = image.get(r, (c + 1).min(w - 1));
            out.push(up + down + left + right - 4.0 * centre);
        }
    }
    Image::new(w, h, out).expect("same shape")
}

impl PriorScore for SmoothnessPrior {
    fn score(&self, state: &Image, step: &StepContext) -> Result<Image> {
        let noise = 1.0 - step.alpha_bar;
        if noise <= 0.0 {
            return Err(Error::config("the smoothness prior has no score at alpha_bar = 1"));
        }
        // sqrt(ᾱ) D(x / sqrt(ᾱ)) - x simplifies to w Δx because D is linear.
        let lap = laplacian(state);
        Ok(lap.map(|v| self.weight * v / noise))
    }

    /// `(1 + w c) / sqrt(ᾱ)` with `c` the centre coefficient of the mirrored
    /// Laplacian: -4 inside, larger where a neighbour reflects onto the pixel.
    fn tweedie_gain(&self, state: &Image, step: &StepContext) -> Option<Image> {
        let (h, w) = state.shape();
        let scale = 1.0 / step.alpha_bar.sqrt();
        let data = (0..h * w)
            .map(|i| {
                let (r, c) = (i / w, i % w);
                let reflected = [r == 0, r + 1 == h, c == 0, c + 1 == w].iter().filter(|&&e| e).count();
                (1.0 + self.weight * (reflected as f64 - 4.0)) * scale
            })
            .collect();
        Image::new(w, h, data).ok()
    }

    fn describe(&self) -> String {
        format!("smooth:{}", self.weight)
    }
}
