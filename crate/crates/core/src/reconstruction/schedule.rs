use crate::error::{Error, Result};

/// Per-step coefficients of the reverse diffusion, indexed `0..K`.
///
/// `alpha_bar[k]` is the cumulative signal fraction `prod_{j<=k} (1 - beta[j])`,
/// `sigma[k]` the ancestral noise scale, and `rho[k]` the guidance weight.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleSet {
    alpha_bar: Vec<f64>,
    beta: Vec<f64>,
    sigma: Vec<f64>,
    rho: Vec<f64>,
}

impl ScheduleSet {
    pub const DEFAULT_STEPS: usize = 1000;
    pub const DEFAULT_BETA_START: f64 = 1e-4;
    pub const DEFAULT_BETA_END: f64 = 2e-2;

    pub fn new(alpha_bar: Vec<f64>, beta: Vec<f64>, sigma: Vec<f64>, rho: Vec<f64>) -> Result<Self> {
        let k = alpha_bar.len();
        if k == 0 {
            return Err(Error::config("schedule needs at least one step"));
        }
        if beta.len() != k || sigma.len() != k || rho.len() != k {
            return Err(Error::config(format!(
                "schedule arrays differ in length: alpha {k}, beta {}, sigma {}, rho {}",
                beta.len(),
                sigma.len(),
                rho.len()
            )));
        }
        let bad = |name: &str, i: usize, v: f64| Err(Error::config(format!("{name}[{i}] = {v} is out of range")));
        for i in 0..k {
            if !(alpha_bar[i] > 0.0 && alpha_bar[i] <= 1.0) {
                return bad("alpha_bar", i, alpha_bar[i]);
            }
            if !(0.0..1.0).contains(&beta[i]) {
                return bad("beta", i, beta[i]);
            }
            if !(sigma[i].is_finite() && sigma[i] >= 0.0) {
                return bad("sigma", i, sigma[i]);
            }
            if !(rho[i].is_finite() && rho[i] >= 0.0) {
                return bad("rho", i, rho[i]);
            }
        }
        if let Some(i) = (1..k).find(|&i| sigma[i - 1] > sigma[i]) {
            return Err(Error::config(format!(
                "sigma must not decrease with the step index (sigma[{}] > sigma[{i}])",
                i - 1
            )));
        }
        Ok(ScheduleSet {
            alpha_bar,
            beta,
            sigma,
            rho,
        })
    }

    /// Linear `beta` ramp with `alpha_bar` its cumulative product,
    /// `sigma = sqrt(beta)`, and constant guidance weight `rho`.
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64, rho: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::config("schedule needs at least one step"));
        }
        let beta: Vec<f64> = if steps == 1 {
            vec![beta_start]
        } else {
            (0..steps)
                .map(|i| beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64)
                .collect()
        };
        let alpha_bar = cumulative_alpha(&beta);
        let sigma = beta.iter().map(|b| b.sqrt()).collect();
        ScheduleSet::new(alpha_bar, beta, sigma, vec![rho; steps])
    }

    pub fn default_with_rho(rho: f64) -> Result<Self> {
        ScheduleSet::linear(
            Self::DEFAULT_STEPS,
            Self::DEFAULT_BETA_START,
            Self::DEFAULT_BETA_END,
            rho,
        )
    }

    pub fn len(&self) -> usize {
        self.alpha_bar.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha_bar.is_empty()
    }

    pub fn alpha_bar(&self) -> &[f64] {
        &self.alpha_bar
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn with_rho(mut self, rho: f64) -> Result<Self> {
        if !(rho.is_finite() && rho >= 0.0) {
            return Err(Error::config(format!("rho must be finite and >= 0, got {rho}")));
        }
        self.rho.iter_mut().for_each(|r| *r = rho);
        Ok(self)
    }

    /// Largest gap between stored `alpha_bar` and the product rebuilt from `beta`.
    pub fn consistency_error(&self) -> f64 {
        cumulative_alpha(&self.beta)
            .iter()
            .zip(&self.alpha_bar)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

fn cumulative_alpha(beta: &[f64]) -> Vec<f64> {
    beta.iter()
        .scan(1.0, |acc, b| {
            *acc *= 1.0 - b;
            Some(*acc)
        })
        .collect()
}
