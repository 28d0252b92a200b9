//! Self-checks of the statistical core, shared by `spad verify` and the tests.

use std::fmt;

use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::distributions::{erlang_cdf, poisson_pmf, Rate, Seconds};
use crate::error::Result;
use crate::likelihood::{
    case_pmf, classify_case, count_pmf_with, grad_log_likelihood, log_likelihood, max_events, pooled_mle, CaseTag,
};
use crate::rng::stream;
use crate::simulator::{simulate_pixel, EventStream, SensorConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Worst error, or the p-value for statistical checks.
    pub measured: f64,
    pub threshold: f64,
    pub detail: String,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<28} measured={:.3e} threshold={:.1e} {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.threshold,
            self.detail
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub exposure: f64,
    pub dead_time: f64,
    pub mc_pixels: usize,
    pub seed: u64,
    /// Replaces the Erlang CDF with a slightly distorted one; every check that
    /// depends on it must then fail.
    pub corrupt_cdf: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            exposure: 1e-3,
            dead_time: 50e-9,
            mc_pixels: 100_000,
            seed: 0,
            corrupt_cdf: false,
        }
    }
}

type Cdf = fn(Seconds, u64, Rate) -> f64;

fn corrupted_cdf(t: Seconds, n: u64, rate: Rate) -> f64 {
    let f = erlang_cdf(t, n, rate);
    f + 1e-6 * f * (1.0 - f)
}

fn secs(v: f64) -> Seconds {
    Seconds::new(v).expect("finite check parameter")
}

fn rate(v: f64) -> Rate {
    Rate::new(v).expect("finite check parameter")
}

fn check(name: &str, measured: f64, threshold: f64, passed: bool, detail: String) -> CheckResult {
    CheckResult {
        name: name.to_string(),
        passed,
        measured,
        threshold,
        detail,
    }
}

/// The 27-point `(λT, τ/T, T)` grid used for the normalization check.
pub fn normalization_grid() -> Vec<(f64, f64, f64)> {
    let mut grid = Vec::new();
    for &mean in &[0.1, 2.0, 50.0] {
        for &ratio in &[1e-4, 3e-3, 0.1] {
            for &t in &[1e-3, 1.0, 10.0] {
                grid.push((mean / t, t, ratio * t));
            }
        }
    }
    grid
}

fn normalization(cdf: Cdf) -> CheckResult {
    let mut worst = 0.0f64;
    for (lam, t, d) in normalization_grid() {
        let m = max_events(secs(t), secs(d)).expect("positive dead time");
        let total: f64 = (0..=m)
            .map(|n| count_pmf_with(cdf, n, rate(lam), secs(t), secs(d)))
            .sum();
        worst = worst.max((total - 1.0).abs());
    }
    check("normalization", worst, 1e-9, worst < 1e-9, "27-point grid".into())
}

fn duality(cdf: Cdf) -> CheckResult {
    let mut worst = 0.0f64;
    for n in 0..=50u64 {
        for &r in &[0.1, 1.0, 10.0] {
            for &t in &[0.01, 1.0, 100.0] {
                let p = poisson_pmf(n, rate(r), secs(t)).expect("finite mean");
                let diff = cdf(secs(t), n, rate(r)) - cdf(secs(t), n + 1, rate(r));
                worst = worst.max((p - diff).abs());
            }
        }
    }
    check("poisson-erlang duality", worst, 1e-12, worst < 1e-12, "n <= 50".into())
}

fn zero_dead_time_collapse(cdf: Cdf) -> CheckResult {
    let mut worst = 0.0f64;
    for &mean in &[0.1, 2.0, 50.0] {
        for n in 0..=200u64 {
            let p = poisson_pmf(n, rate(mean), secs(1.0)).expect("finite mean");
            let q = count_pmf_with(cdf, n, rate(mean), secs(1.0), Seconds::ZERO);
            worst = worst.max((p - q).abs());
        }
    }
    check(
        "zero dead-time collapse",
        worst,
        1e-12,
        worst < 1e-12,
        "count_pmf vs poisson".into(),
    )
}

/// Streams used by the gradient check, keyed by `(N, case)`.
pub fn gradient_streams() -> Vec<EventStream> {
    let (t, d) = (secs(1.0), secs(0.01));
    let make = |times: &[f64]| EventStream::from_seconds(Some(t), d, times).expect("valid stream");
    let case_one: Vec<f64> = (1..=7).map(|i| 0.1 * i as f64).collect();
    let mut case_two: Vec<f64> = (1..=6).map(|i| 0.1 * i as f64).collect();
    case_two.push(0.995);
    vec![
        make(&[]),
        make(&[0.5]),
        make(&case_one),
        make(&[0.995]),
        make(&case_two),
    ]
}

fn gradient_fd() -> CheckResult {
    let mut worst = 0.0f64;
    for stream in gradient_streams() {
        for &lam in &[0.5, 5.0, 500.0] {
            let h = 1e-6 * f64::max(lam, 1.0);
            let f = |x: f64| log_likelihood(&stream, rate(x)).log_value;
            let fd = (f(lam + h) - f(lam - h)) / (2.0 * h);
            let g = grad_log_likelihood(&stream, rate(lam)).expect("positive flux");
            worst = worst.max((fd - g).abs() / g.abs().max(1e-300));
        }
    }
    check(
        "gradient finite difference",
        worst,
        1e-6,
        worst < 1e-6,
        "both cases, N in {0,1,7}".into(),
    )
}

/// Counts of `(N, case)` over `pixels` simulated streams with no nuisances.
pub fn simulate_counts(lambda: f64, exposure: f64, dead: f64, pixels: usize, seed: u64) -> Result<Vec<[u64; 2]>> {
    let sensor = SensorConfig {
        quantum_efficiency: 1.0,
        exposure,
        dead_time: dead,
        ..SensorConfig::default()
    }
    .without_nuisances();
    let bins = histogram_len(lambda, exposure, dead);
    (0..pixels)
        .into_par_iter()
        .try_fold(
            || vec![[0u64; 2]; bins],
            |mut hist, i| {
                let s = simulate_pixel(rate(lambda), &sensor, &mut stream(seed, i as u64))?;
                let slot = if classify_case(&s) == CaseTag::CaseI { 0 } else { 1 };
                hist[s.len().min(bins - 1)][slot] += 1;
                Ok(hist)
            },
        )
        .try_reduce(
            || vec![[0u64; 2]; bins],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| {
                    x[0] += y[0];
                    x[1] += y[1];
                });
                Ok(a)
            },
        )
}

fn histogram_len(lambda: f64, exposure: f64, dead: f64) -> usize {
    match max_events(secs(exposure), secs(dead)) {
        Some(m) => m as usize + 1,
        None => {
            let mean = lambda * exposure;
            (mean + 20.0 * mean.sqrt() + 50.0) as usize
        }
    }
}

/// Pearson χ² with adjacent bins pooled until each expects at least 5.
/// Returns `(statistic, degrees of freedom, p-value)`.
pub fn chi_square(observed: &[u64], expected: &[f64]) -> (f64, usize, f64) {
    let mut pooled: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (&ob, &ex) in observed.iter().zip(expected) {
        o += ob as f64;
        e += ex;
        if e >= 5.0 {
            pooled.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if let Some(last) = pooled.last_mut() {
        last.0 += o;
        last.1 += e;
    }
    let stat: f64 = pooled.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = pooled.len().saturating_sub(1).max(1);
    let p = ChiSquared::new(dof as f64).map_or(0.0, |d| 1.0 - d.cdf(stat));
    (stat, dof, p)
}

fn monte_carlo(cdf: Cdf, options: &VerifyOptions, lambda: f64) -> Result<Vec<CheckResult>> {
    let (t, d) = (options.exposure, options.dead_time);
    let hist = simulate_counts(lambda, t, d, options.mc_pixels, options.seed)?;
    let pixels = options.mc_pixels as f64;
    let lam = rate(lambda);

    let observed: Vec<u64> = hist.iter().map(|h| h[0] + h[1]).collect();
    let expected: Vec<f64> = (0..hist.len() as u64)
        .map(|n| pixels * count_pmf_with(cdf, n, lam, secs(t), secs(d)))
        .collect();
    let (stat, dof, p) = chi_square(&observed, &expected);
    let mut out = vec![check(
        &format!("monte-carlo counts λ={lambda:.0e}"),
        p,
        1e-3,
        p > 1e-3,
        format!("chi2={stat:.1} dof={dof} pixels={}", options.mc_pixels),
    )];

    let mut split_obs = Vec::new();
    let mut split_exp = Vec::new();
    for (n, h) in hist.iter().enumerate() {
        for (slot, case) in [CaseTag::CaseI, CaseTag::CaseII].into_iter().enumerate() {
            split_obs.push(h[slot]);
            split_exp.push(pixels * case_pmf(n as u64, case, lam, secs(t), secs(d)));
        }
    }
    let (stat, dof, p) = chi_square(&split_obs, &split_exp);
    out.push(check(
        &format!("monte-carlo cases λ={lambda:.0e}"),
        p,
        1e-3,
        p > 1e-3,
        format!("chi2={stat:.1} dof={dof}"),
    ));
    Ok(out)
}

fn mle_consistency(options: &VerifyOptions) -> Result<CheckResult> {
    let lambda = 1e5;
    let sensor = SensorConfig {
        quantum_efficiency: 1.0,
        exposure: options.exposure,
        dead_time: options.dead_time,
        ..SensorConfig::default()
    }
    .without_nuisances();
    let streams: Vec<EventStream> = (0..10_000u64)
        .into_par_iter()
        .map(|i| simulate_pixel(rate(lambda), &sensor, &mut stream(options.seed ^ 0x6d6c65, i)))
        .collect::<Result<_>>()?;
    let total: usize = streams.iter().map(EventStream::len).sum();
    let estimate = pooled_mle(&streams);
    let err = (estimate.rate / lambda - 1.0).abs();
    let bound = 3.0 / (total as f64).sqrt();
    Ok(check(
        "pooled mle consistency",
        err,
        bound,
        err < bound,
        format!("K=10000 sum N={total}"),
    ))
}

/// Runs every check. Monte-Carlo checks use `options.mc_pixels` pixels at each
/// of λ = 1e3, 1e5 and 1e7 per second.
pub fn run_all(options: &VerifyOptions) -> Result<VerifyReport> {
    let cdf: Cdf = if options.corrupt_cdf { corrupted_cdf } else { erlang_cdf };
    let mut checks = vec![
        normalization(cdf),
        duality(cdf),
        zero_dead_time_collapse(cdf),
        gradient_fd(),
    ];
    for lambda in [1e3, 1e5, 1e7] {
        checks.extend(monte_carlo(cdf, options, lambda)?);
    }
    checks.push(mle_consistency(options)?);
    Ok(VerifyReport { checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_checks_pass() {
        for c in [
            normalization(erlang_cdf),
            duality(erlang_cdf),
            zero_dead_time_collapse(erlang_cdf),
            gradient_fd(),
        ] {
            assert!(c.passed, "{c}");
        }
    }

    #[test]
    fn corrupted_cdf_is_caught() {
        assert!(!duality(corrupted_cdf).passed);
        assert!(!zero_dead_time_collapse(corrupted_cdf).passed);
    }

    #[test]
    fn chi_square_pools_sparse_bins() {
        let (stat, dof, p) = chi_square(&[10, 10, 1, 0], &[10.0, 10.0, 0.5, 0.5]);
        assert_eq!(dof, 1);
        assert!(stat.abs() < 1e-12);
        assert!((p - 1.0).abs() < 1e-12);
    }
}
