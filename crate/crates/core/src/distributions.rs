//! Poisson, Erlang, exponential, and shifted-exponential kernels.
//!
//! Every probability here reduces to a Poisson term `x^n e^{-x} / n!` with
//! `x = rate * t`. Small counts use the direct expression; larger counts use
//! the saddle-point form (Stirling remainder plus a stable deviance term), which
//! stays accurate for counts in the tens of thousands where `n!` and `x^n`
//! overflow.
//!
//! The Erlang CDF is evaluated as the explicit finite Poisson sum
//! `1 - sum_{i<n} p_i`, accumulated with compensated summation. When the sum is
//! close to one the complementary tail `sum_{i>=n} p_i` is accumulated instead so
//! that small CDF values keep their relative accuracy.

use std::f64::consts::PI;
use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};

/// An event rate in events per second. Always finite and non-negative.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Rate(f64);

impl Rate {
    pub const ZERO: Rate = Rate(0.0);

    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value >= 0.0 {
            Ok(Rate(value))
        } else {
            Err(Error::domain(format!("rate must be finite and >= 0, got {value}")))
        }
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/s", self.0)
    }
}

/// A time span in seconds. Always finite and non-negative.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Seconds(f64);

impl Seconds {
    pub const ZERO: Seconds = Seconds(0.0);

    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value >= 0.0 {
            Ok(Seconds(value))
        } else {
            Err(Error::domain(format!("duration must be finite and >= 0, got {value}")))
        }
    }

    /// Clamps negative values to zero. Used where an integration bound may
    /// legitimately fall below the origin.
    pub fn clamped(value: f64) -> Result<Self> {
        Seconds::new(value.max(0.0))
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }
}

impl fmt::Display for Seconds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}s", self.0)
    }
}

/// Counts at or below this use the direct `x^n e^{-x} / n!` expression.
pub const DIRECT_PATH_MAX_N: u64 = 20;

const FACTORIALS: [f64; 21] = {
    let mut table = [1.0; 21];
    let mut i = 1;
    while i < 21 {
        table[i] = table[i - 1] * i as f64;
        i += 1;
    }
    table
};

/// `ln(n!) - [(n + 1/2) ln n - n + ln sqrt(2 pi)]`, the Stirling remainder.
fn stirling_remainder(n: u64) -> f64 {
    debug_assert!(n >= 1);
    if n <= 15 {
        let nf = n as f64;
        let ln_fact: f64 = (2..=n).map(|k| (k as f64).ln()).sum();
        return ln_fact - (nf + 0.5) * nf.ln() + nf - 0.5 * (2.0 * PI).ln();
    }
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    let nf = n as f64;
    let nn = nf * nf;
    (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / nf
}

/// `n ln(n/x) + x - n`, evaluated without cancellation when `n` is close to `x`.
fn deviance(n: f64, x: f64) -> f64 {
    if (n - x).abs() < 0.1 * (n + x) {
        let v = (n - x) / (n + x);
        let mut sum = (n - x) * v;
        let mut ej = 2.0 * n * v;
        let v2 = v * v;
        for j in 1..1000 {
            ej *= v2;
            let next = sum + ej / (2 * j + 1) as f64;
            if next == sum {
                return sum;
            }
            sum = next;
        }
        sum
    } else {
        n * (n / x).ln() + x - n
    }
}

/// Natural log of the Poisson term `x^n e^{-x} / n!` for mean `x >= 0`.
pub fn ln_poisson_term(n: u64, x: f64) -> f64 {
    if x == 0.0 {
        return if n == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if n == 0 {
        return -x;
    }
    let nf = n as f64;
    -stirling_remainder(n) - deviance(nf, x) - 0.5 * (2.0 * PI * nf).ln()
}

/// Direct evaluation `x^n e^{-x} / n!`. Only defined for `n <= 20`.
pub fn poisson_term_direct(n: u64, x: f64) -> Option<f64> {
    if n > DIRECT_PATH_MAX_N {
        return None;
    }
    let value = x.powi(n as i32) * (-x).exp() / FACTORIALS[n as usize];
    value.is_finite().then_some(value)
}

fn poisson_term(n: u64, x: f64) -> f64 {
    poisson_term_direct(n, x)
        .unwrap_or_else(|| ln_poisson_term(n, x).exp())
        .min(1.0)
}

fn checked_mean(rate: Rate, t: Seconds) -> Result<f64> {
    let x = rate.get() * t.get();
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::domain(format!("rate * t is not finite ({rate} * {t})")))
    }
}

/// Probability of exactly `n` events in a window `t` of a Poisson process.
pub fn poisson_pmf(n: u64, rate: Rate, t: Seconds) -> Result<f64> {
    Ok(poisson_term(n, checked_mean(rate, t)?))
}

/// Density of the waiting time until the `n`-th event (`n >= 1`).
pub fn erlang_pdf(t: Seconds, n: u64, rate: Rate) -> Result<f64> {
    if n == 0 {
        return Err(Error::domain("Erlang density is undefined for n = 0"));
    }
    // rate^n t^{n-1} e^{-rate t} / (n-1)! = rate * Poisson(n-1; rate t)
    let x = checked_mean(rate, t)?;
    let term = poisson_term_direct(n - 1, x).unwrap_or_else(|| ln_poisson_term(n - 1, x).exp());
    Ok(rate.get() * term)
}

/// Probability that at least `n` events have occurred by time `t`.
///
/// `n = 0` gives exactly 1; `t = 0` with `n >= 1` gives exactly 0.
pub fn erlang_cdf(t: Seconds, n: u64, rate: Rate) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let x = rate.get() * t.get();
    if x == 0.0 {
        return 0.0;
    }
    if !x.is_finite() {
        return 1.0;
    }
    if n as f64 > x {
        upper_poisson_tail(n, x).clamp(0.0, 1.0)
    } else {
        (1.0 - lower_poisson_sum(n, x)).clamp(0.0, 1.0)
    }
}

/// `sum_{i >= n} p_i`, accumulated outward from the largest term.
fn upper_poisson_tail(n: u64, x: f64) -> f64 {
    let mut term = ln_poisson_term(n, x).exp();
    let mut acc = NeumaierSum::default();
    let mut i = n;
    while term > 0.0 {
        acc.add(term);
        if term < acc.value() * 1e-18 {
            break;
        }
        i += 1;
        term *= x / i as f64;
    }
    acc.value()
}

/// `sum_{i < n} p_i` for `n <= x`, accumulated downward from `i = n - 1`.
fn lower_poisson_sum(n: u64, x: f64) -> f64 {
    let mut i = n - 1;
    let mut term = ln_poisson_term(i, x).exp();
    let mut acc = NeumaierSum::default();
    loop {
        acc.add(term);
        if i == 0 || term == 0.0 || term < acc.value() * 1e-18 {
            break;
        }
        term *= i as f64 / x;
        i -= 1;
    }
    acc.value()
}

/// Inter-detection gap density under a non-paralyzable dead time.
pub fn shifted_exp_pdf(dt: Seconds, rate: Rate, dead: Seconds) -> f64 {
    if dt.get() < dead.get() {
        0.0
    } else {
        rate.get() * (-rate.get() * (dt.get() - dead.get())).exp()
    }
}

/// Inverse-CDF map from `u` in `(0, 1]` to an exponential variate.
pub fn exponential_from_uniform(u: f64, rate: Rate) -> Option<Seconds> {
    if rate.get() == 0.0 {
        return None;
    }
    Some(Seconds((0.0 - u.ln()) / rate.get()))
}

/// Draws an exponential waiting time. `None` means no event ever occurs
/// (`rate = 0`).
pub fn sample_exponential<R: Rng + ?Sized>(rate: Rate, rng: &mut R) -> Option<Seconds> {
    if rate.get() == 0.0 {
        return None;
    }
    let u = 1.0 - rng.random::<f64>();
    exponential_from_uniform(u, rate)
}

/// Neumaier's variant of Kahan summation.
#[derive(Debug, Default, Clone, Copy)]
pub struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = NeumaierSum::default();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rate(v: f64) -> Rate {
        Rate::new(v).unwrap()
    }

    fn secs(v: f64) -> Seconds {
        Seconds::new(v).unwrap()
    }

    #[test]
    fn newtypes_reject_bad_values() {
        assert!(Rate::new(-1.0).is_err());
        assert!(Rate::new(f64::NAN).is_err());
        assert!(Seconds::new(f64::INFINITY).is_err());
        assert_eq!(Seconds::clamped(-3.0).unwrap(), Seconds::ZERO);
    }

    #[test]
    fn poisson_zero_count_is_exp() {
        for x in [0.0, 0.3, 5.0, 700.0] {
            let p = poisson_pmf(0, rate(x), secs(1.0)).unwrap();
            assert_relative_eq!(p, (-x).exp(), max_relative = 1e-15);
        }
    }

    #[test]
    fn poisson_rate_zero_edge() {
        assert_eq!(poisson_pmf(0, Rate::ZERO, secs(2.0)).unwrap(), 1.0);
        for n in [1, 5, 21, 400] {
            assert_eq!(poisson_pmf(n, Rate::ZERO, secs(2.0)).unwrap(), 0.0);
        }
    }

    #[test]
    fn poisson_rejects_overflowing_mean() {
        assert!(poisson_pmf(3, rate(1e300), secs(1e300)).is_err());
    }

    #[test]
    fn poisson_sums_to_one() {
        let total: NeumaierSum = (0..=200)
            .map(|n| poisson_pmf(n, rate(5.0), secs(1.0)).unwrap())
            .collect();
        assert!((total.value() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn log_and_direct_paths_agree() {
        for n in 0..=DIRECT_PATH_MAX_N {
            for x in [1e-3, 0.5, 1.0, 7.5, 20.0, 60.0] {
                let direct = poisson_term_direct(n, x).unwrap();
                let log = ln_poisson_term(n, x).exp();
                assert_relative_eq!(direct, log, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn large_count_matches_reference() {
        // mpmath, 40 digits: Poisson(10000; 10000)
        let p = poisson_pmf(10_000, rate(1e4), secs(1.0)).unwrap();
        assert_relative_eq!(p, 0.003_989_389_558_962_826, max_relative = 1e-12);
    }

    #[test]
    fn erlang_pdf_reduces_to_exponential() {
        for t in [0.0, 0.1, 2.0] {
            let f = erlang_pdf(secs(t), 1, rate(3.0)).unwrap();
            assert_relative_eq!(f, 3.0 * (-3.0 * t).exp(), max_relative = 1e-15);
        }
    }

    #[test]
    fn erlang_pdf_rejects_zero_shape() {
        assert!(erlang_pdf(secs(1.0), 0, rate(1.0)).is_err());
    }

    #[test]
    fn erlang_pdf_mode() {
        let grid: Vec<f64> = (0..=10_000).map(|i| i as f64 * 1e-3).collect();
        let best = grid
            .iter()
            .copied()
            .max_by(|a, b| {
                let fa = erlang_pdf(secs(*a), 4, rate(1.0)).unwrap();
                let fb = erlang_pdf(secs(*b), 4, rate(1.0)).unwrap();
                fa.total_cmp(&fb)
            })
            .unwrap();
        assert!((best - 3.0).abs() < 2e-3, "argmax at {best}");
    }

    #[test]
    fn erlang_cdf_edges() {
        assert_eq!(erlang_cdf(secs(3.0), 0, rate(2.0)), 1.0);
        assert_eq!(erlang_cdf(Seconds::ZERO, 0, rate(2.0)), 1.0);
        for n in [1, 2, 50] {
            assert_eq!(erlang_cdf(Seconds::ZERO, n, rate(2.0)), 0.0);
        }
    }

    #[test]
    fn erlang_cdf_reference_values() {
        // mpmath regularized lower incomplete gamma
        assert_relative_eq!(
            erlang_cdf(secs(1.0), 2, rate(3.0)),
            0.800_851_726_528_544_2,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            erlang_cdf(secs(2.5), 7, rate(1.3)),
            0.047_725_258_750_725_14,
            max_relative = 1e-13
        );
    }

    #[test]
    fn erlang_cdf_monotone_in_n_and_t() {
        let r = rate(2.0);
        for n in 0..30 {
            assert!(erlang_cdf(secs(4.0), n + 1, r) <= erlang_cdf(secs(4.0), n, r));
        }
        let mut prev = 0.0;
        for i in 0..200 {
            let f = erlang_cdf(secs(i as f64 * 0.05), 6, r);
            assert!(f >= prev);
            prev = f;
        }
    }

    #[test]
    fn shifted_exponential_piecewise() {
        assert_eq!(shifted_exp_pdf(secs(0.5), rate(2.0), secs(1.0)), 0.0);
        assert_relative_eq!(shifted_exp_pdf(secs(1.0), rate(2.0), secs(1.0)), 2.0);
        for dt in [0.0, 0.3, 1.7] {
            assert_relative_eq!(
                shifted_exp_pdf(secs(dt), rate(2.0), Seconds::ZERO),
                2.0 * (-2.0 * dt).exp()
            );
        }
    }

    #[test]
    fn inverse_cdf_endpoint() {
        assert_eq!(exponential_from_uniform(1.0, rate(4.0)).unwrap(), Seconds::ZERO);
        assert!(exponential_from_uniform(0.5, Rate::ZERO).is_none());
    }

    #[test]
    fn sampling_is_deterministic_and_has_right_mean() {
        let mut a = ChaCha8Rng::seed_from_u64(17);
        let mut b = ChaCha8Rng::seed_from_u64(17);
        let first: Vec<f64> = (0..32)
            .map(|_| sample_exponential(rate(4.0), &mut a).unwrap().get())
            .collect();
        let second: Vec<f64> = (0..32)
            .map(|_| sample_exponential(rate(4.0), &mut b).unwrap().get())
            .collect();
        assert_eq!(first, second);

        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 1_000_000;
        let mean = (0..n)
            .map(|_| sample_exponential(rate(4.0), &mut rng).unwrap().get())
            .sum::<f64>()
            / n as f64;
        assert!((mean - 0.25).abs() < 3.0 * 0.25 / 1e3, "mean {mean}");
    }

    #[test]
    fn zero_rate_never_fires() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sample_exponential(Rate::ZERO, &mut rng).is_none());
    }
}
