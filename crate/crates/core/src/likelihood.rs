//! Exact likelihood of a dead-time-gated detection stream.
//!
//! Removing the dead time after each detection turns the stream into a plain
//! Poisson process, so the density of `(t_1, ..., t_N)` is
//! `λ^N exp(-λ D)` where `D` is the live time actually observed:
//!
//! * Case I (`t_N <= T - τ`, or no detections): the pixel was live again after
//!   the last detection and saw nothing until `T`, so `D = T - N τ`.
//! * Case II (`t_N > T - τ`): the exposure ended inside the last dead time and
//!   `D = t_N - (N - 1) τ`.
//!
//! Both cases agree at the boundary `t_N = T - τ`. A stream without an exposure
//! bound (fixed-count acquisition) ends at its last detection and uses the Case
//! II form. The likelihood depends on the stream only through `(N, D)`.
//!
//! `D` is computed in integer picoseconds, so streams sharing `(N, t_N)` give
//! bit-identical results.

use rayon::prelude::*;

use crate::distributions::{erlang_cdf, Rate, Seconds};
use crate::error::{Error, Result};
use crate::grid::{FluxMap, Image};
use crate::simulator::{EventCollection, EventStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CaseTag {
    /// The last dead time ended before the exposure did.
    CaseI,
    /// The exposure ended inside the last dead time.
    CaseII,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LikelihoodResult {
    pub log_value: f64,
    pub case: CaseTag,
}

/// `(N, D, case)`: everything the likelihood needs from a stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SufficientStats {
    pub count: u64,
    /// Observed live time `D` in seconds.
    pub live_time: f64,
    pub case: CaseTag,
}

pub fn classify_case(stream: &EventStream) -> CaseTag {
    match (stream.exposure_ps(), stream.last_time_ps()) {
        (_, None) => CaseTag::CaseI,
        (None, Some(_)) => CaseTag::CaseII,
        (Some(exposure), Some(last)) => {
            if u128::from(last) + u128::from(stream.dead_time_ps()) <= u128::from(exposure) {
                CaseTag::CaseI
            } else {
                CaseTag::CaseII
            }
        }
    }
}

pub fn sufficient_stats(stream: &EventStream) -> SufficientStats {
    let case = classify_case(stream);
    let n = stream.len() as i128;
    let dead = i128::from(stream.dead_time_ps());
    let live_ps = match case {
        CaseTag::CaseI => i128::from(stream.exposure_ps().unwrap_or(0)) - n * dead,
        CaseTag::CaseII => i128::from(stream.last_time_ps().unwrap_or(0)) - (n - 1) * dead,
    };
    SufficientStats {
        count: stream.len() as u64,
        live_time: live_ps as f64 / 1e12,
        case,
    }
}

fn log_density(stats: &SufficientStats, flux: f64) -> f64 {
    if stats.count == 0 {
        return -flux * stats.live_time;
    }
    if flux == 0.0 {
        return f64::NEG_INFINITY;
    }
    stats.count as f64 * flux.ln() - flux * stats.live_time
}

/// Log-density of the stream at `flux`; `-inf` when `flux = 0` and the
/// stream has detections.
pub fn log_likelihood(stream: &EventStream, flux: Rate) -> LikelihoodResult {
    let stats = sufficient_stats(stream);
    LikelihoodResult {
        log_value: log_density(&stats, flux.get()),
        case: stats.case,
    }
}

/// Derivative of [`log_likelihood`] with respect to the flux.
pub fn grad_log_likelihood(stream: &EventStream, flux: Rate) -> Result<f64> {
    if flux.get() <= 0.0 {
        return Err(Error::domain("gradient of the log-likelihood needs a positive flux"));
    }
    let stats = sufficient_stats(stream);
    Ok(stats.count as f64 / flux.get() - stats.live_time)
}

/// Largest detection count possible in `exposure`, `floor(T / τ) + 1`.
/// `None` when there is no dead time and the count is unbounded.
pub fn max_events(exposure: Seconds, dead: Seconds) -> Option<u64> {
    if dead.get() == 0.0 {
        return None;
    }
    let ratio = exposure.get() / dead.get();
    // Ratios such as 1e-3 / 5e-8 should count as the integer they denote even
    // when the quotient lands one ulp below it.
    let nearest = ratio.round();
    let whole = if (ratio - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest
    } else {
        ratio.floor()
    };
    Some(whole as u64 + 1)
}

fn cdf_at(t: f64, n: u64, flux: Rate) -> f64 {
    erlang_cdf(Seconds::clamped(t).expect("finite time"), n, flux)
}

/// Probability of exactly `n` detections in a fixed exposure under dead time.
///
/// `F(T - (n-1)τ; n) - F(T - nτ; n+1)` with Erlang CDFs whose time arguments are
/// clamped at zero. Counts above [`max_events`] get probability zero.
pub fn count_pmf(n: u64, flux: Rate, exposure: Seconds, dead: Seconds) -> f64 {
    count_pmf_with(erlang_cdf, n, flux, exposure, dead)
}

/// [`count_pmf`] with a caller-supplied Erlang CDF `cdf(t, n, rate)`.
pub fn count_pmf_with<F>(cdf: F, n: u64, flux: Rate, exposure: Seconds, dead: Seconds) -> f64
where
    F: Fn(Seconds, u64, Rate) -> f64,
{
    let (t, d) = (exposure.get(), dead.get());
    let at = |time: f64, k: u64| cdf(Seconds::clamped(time).expect("finite time"), k, flux);
    let upper = at(t - (n as f64 - 1.0) * d, n);
    let lower = at(t - n as f64 * d, n + 1);
    (upper - lower).clamp(0.0, 1.0)
}

/// Probability of exactly `n` detections with the stream falling in `case`.
///
/// Case I: `F(T - nτ; n) - F(T - nτ; n+1)`.
/// Case II: `F(T - (n-1)τ; n) - F(T - nτ; n)`, zero for `n = 0`.
pub fn case_pmf(n: u64, case: CaseTag, flux: Rate, exposure: Seconds, dead: Seconds) -> f64 {
    let (t, d) = (exposure.get(), dead.get());
    let live = t - n as f64 * d;
    let p = match case {
        CaseTag::CaseI => cdf_at(live, n, flux) - cdf_at(live, n + 1, flux),
        CaseTag::CaseII if n == 0 => 0.0,
        CaseTag::CaseII => cdf_at(live + d, n, flux) - cdf_at(live, n, flux),
    };
    p.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MleFlag {
    Interior,
    /// No detections: the likelihood increases toward zero flux.
    BoundaryZero,
    /// Nonpositive live time: the likelihood grows without bound.
    UnboundedLikelihood,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleEstimate {
    /// `N / D`; `0` at the boundary and `+inf` when unbounded.
    pub rate: f64,
    pub flag: MleFlag,
}

impl MleEstimate {
    fn from_totals(count: u64, live_time: f64) -> Self {
        if count == 0 {
            MleEstimate {
                rate: 0.0,
                flag: MleFlag::BoundaryZero,
            }
        } else if live_time <= 0.0 {
            MleEstimate {
                rate: f64::INFINITY,
                flag: MleFlag::UnboundedLikelihood,
            }
        } else {
            MleEstimate {
                rate: count as f64 / live_time,
                flag: MleFlag::Interior,
            }
        }
    }

    pub fn is_valid(&self) -> bool {
        self.flag != MleFlag::UnboundedLikelihood
    }
}

/// Closed-form maximizer of [`log_likelihood`] for one stream.
pub fn mle_flux(stream: &EventStream) -> MleEstimate {
    let stats = sufficient_stats(stream);
    MleEstimate::from_totals(stats.count, stats.live_time)
}

/// Maximizer of the summed log-likelihood of independent streams sharing one
/// flux.
pub fn pooled_mle<'a>(streams: impl IntoIterator<Item = &'a EventStream>) -> MleEstimate {
    let (count, live_time) = streams.into_iter().fold((0u64, 0.0), |(n, d), s| {
        let stats = sufficient_stats(s);
        (n + stats.count, d + stats.live_time)
    });
    MleEstimate::from_totals(count, live_time)
}

/// Per-pixel gradient plus a mask of pixels where it is undefined.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientMap {
    pub gradient: Image,
    /// `true` where the flux is zero but detections were recorded.
    pub invalid: Vec<bool>,
}

impl GradientMap {
    pub fn invalid_count(&self) -> usize {
        self.invalid.iter().filter(|&&b| b).count()
    }
}

fn check_dims(streams: &EventCollection, flux: &FluxMap) -> Result<()> {
    if streams.width() != flux.width() || streams.height() != flux.height() {
        return Err(Error::input(format!(
            "streams are {}x{} but the flux map is {}x{}",
            streams.width(),
            streams.height(),
            flux.width(),
            flux.height()
        )));
    }
    Ok(())
}

/// Element-wise gradient of the log-likelihood over a field of view.
///
/// A zero-flux pixel gets `-T` when it recorded nothing and is flagged invalid
/// (gradient 0) otherwise.
pub fn grad_log_likelihood_map(streams: &EventCollection, flux: &FluxMap) -> Result<GradientMap> {
    check_dims(streams, flux)?;
    let (gradient, invalid): (Vec<f64>, Vec<bool>) = streams
        .streams()
        .par_iter()
        .zip(flux.image().data().par_iter())
        .map(|(stream, &lambda)| {
            let stats = sufficient_stats(stream);
            if lambda > 0.0 {
                (stats.count as f64 / lambda - stats.live_time, false)
            } else if stats.count == 0 {
                (-stats.live_time, false)
            } else {
                (0.0, true)
            }
        })
        .unzip();
    Ok(GradientMap {
        gradient: Image::new(flux.width(), flux.height(), gradient)?,
        invalid,
    })
}

/// Sum of per-pixel log-likelihoods.
pub fn total_log_likelihood(streams: &EventCollection, flux: &FluxMap) -> Result<f64> {
    check_dims(streams, flux)?;
    Ok(streams
        .streams()
        .iter()
        .zip(flux.rates())
        .map(|(s, rate)| log_likelihood(s, rate).log_value)
        .sum())
}

/// Per-pixel MLE with a flag per pixel.
pub fn mle_map(streams: &EventCollection) -> (Image, Vec<MleFlag>) {
    let estimates: Vec<MleEstimate> = streams.streams().par_iter().map(mle_flux).collect();
    let values = estimates.iter().map(|e| e.rate).collect();
    let flags = estimates.iter().map(|e| e.flag).collect();
    let image = Image::new(streams.width(), streams.height(), values).expect("collection dimensions are positive");
    (image, flags)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn secs(v: f64) -> Seconds {
        Seconds::new(v).unwrap()
    }

    fn rate(v: f64) -> Rate {
        Rate::new(v).unwrap()
    }

    fn bounded(times: &[f64]) -> EventStream {
        EventStream::from_seconds(Some(secs(1.0)), secs(0.01), times).unwrap()
    }

    #[test]
    fn classification_edges() {
        assert_eq!(classify_case(&bounded(&[])), CaseTag::CaseI);
        assert_eq!(classify_case(&bounded(&[0.5, 0.99])), CaseTag::CaseI);
        assert_eq!(classify_case(&bounded(&[0.5, 0.990_000_000_001])), CaseTag::CaseII);
        assert_eq!(classify_case(&bounded(&[1.0])), CaseTag::CaseII);
        let open = EventStream::from_seconds(None, secs(0.01), &[0.2]).unwrap();
        assert_eq!(classify_case(&open), CaseTag::CaseII);
    }

    #[test]
    fn log_likelihood_closed_forms() {
        let empty = log_likelihood(&bounded(&[]), rate(2.5));
        assert_eq!(empty.log_value, -2.5);
        let three = log_likelihood(&bounded(&[0.1, 0.2, 0.3]), rate(2.0));
        assert!((three.log_value - (3.0 * 2f64.ln() - 2.0 * 0.97)).abs() < 1e-14);
        assert_eq!(three.case, CaseTag::CaseI);
        let late = log_likelihood(&bounded(&[0.1, 0.995]), rate(2.0));
        assert_eq!(late.case, CaseTag::CaseII);
        assert!((late.log_value - (2.0 * 2f64.ln() - 2.0 * (0.995 - 0.01))).abs() < 1e-14);
    }

    #[test]
    fn zero_flux_edges() {
        assert_eq!(log_likelihood(&bounded(&[]), Rate::ZERO).log_value, 0.0);
        assert_eq!(
            log_likelihood(&bounded(&[0.4]), Rate::ZERO).log_value,
            f64::NEG_INFINITY
        );
        assert!(grad_log_likelihood(&bounded(&[]), Rate::ZERO).is_err());
    }

    #[test]
    fn cases_meet_at_boundary() {
        let lam = rate(3.7);
        let at = log_likelihood(&bounded(&[0.3, 0.99]), lam);
        let past = log_likelihood(&bounded(&[0.3, 0.990_000_000_001]), lam);
        assert_eq!(at.case, CaseTag::CaseI);
        assert_eq!(past.case, CaseTag::CaseII);
        assert!((at.log_value - past.log_value).abs() < 1e-11);
    }

    #[test]
    fn gradient_closed_forms() {
        assert_eq!(grad_log_likelihood(&bounded(&[]), rate(3.0)).unwrap(), -1.0);
        let s = bounded(&[0.1, 0.2, 0.3]);
        let root = 3.0 / (1.0 - 0.03);
        assert!(grad_log_likelihood(&s, rate(root)).unwrap().abs() < 1e-12);
    }

    #[test]
    fn mle_examples() {
        let times: Vec<f64> = (0..10).map(|i| 0.05 + 0.08 * i as f64).collect();
        let est = mle_flux(&bounded(&times));
        assert_eq!(est.flag, MleFlag::Interior);
        assert!((est.rate - 10.0 / 0.9).abs() < 1e-9);
        assert!(grad_log_likelihood(&bounded(&times), rate(est.rate)).unwrap().abs() < 1e-9);

        let no_dead = EventStream::from_seconds(Some(secs(2.0)), Seconds::ZERO, &[0.5, 1.5]).unwrap();
        assert_eq!(mle_flux(&no_dead).rate, 1.0);

        let empty = mle_flux(&bounded(&[]));
        assert_eq!((empty.rate, empty.flag), (0.0, MleFlag::BoundaryZero));

        let first = EventStream::from_seconds(None, secs(0.01), &[0.25]).unwrap();
        assert_eq!(mle_flux(&first).rate, 4.0);

        let packed = EventStream::from_seconds(None, secs(0.01), &[0.0, 0.01]).unwrap();
        assert_eq!(mle_flux(&packed).flag, MleFlag::UnboundedLikelihood);
    }

    #[test]
    fn max_events_examples() {
        assert_eq!(max_events(secs(1e-3), secs(50e-9)), Some(20001));
        assert_eq!(max_events(secs(1e-9), secs(50e-9)), Some(1));
        assert_eq!(max_events(secs(1.0), Seconds::ZERO), None);
        assert_eq!(max_events(secs(1.0), secs(0.3)), Some(4));
    }

    #[test]
    #[allow(clippy::excessive_precision)]
    fn count_pmf_reference_values() {
        let (t, d) = (secs(1e-3), secs(50e-9));
        let cases = [
            (90, 0.026_285_760_533_286_202),
            (99, 0.040_209_107_936_049_859),
            (100, 0.040_011_088_118_989_767),
            (110, 0.022_254_535_623_291_363),
        ];
        for (n, want) in cases {
            let got = count_pmf(n, rate(1e5), t, d);
            assert!((got - want).abs() < 1e-14, "n={n}: {got} vs {want}");
        }
        let (t, d) = (secs(1.0), secs(0.1));
        let cases = [
            (0, 0.135_335_283_236_612_69),
            (1, 0.327_501_603_783_829_62),
            (2, 0.320_521_602_798_820_68),
            (5, 0.007_151_603_458_859_719_8),
            (10, 2.353_068_752_561_141_1e-14),
            (11, 0.0),
        ];
        for (n, want) in cases {
            let got = count_pmf(n, rate(2.0), t, d);
            assert!((got - want).abs() <= 1e-15 + 1e-12 * want, "n={n}: {got} vs {want}");
        }
    }

    #[test]
    fn count_pmf_without_dead_time_is_poisson() {
        for n in 0..40 {
            let a = count_pmf(n, rate(7.0), secs(1.3), Seconds::ZERO);
            let b = crate::distributions::poisson_pmf(n, rate(7.0), secs(1.3)).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn case_split_adds_up() {
        let (t, d) = (secs(1.0), secs(0.1));
        for n in 0..=11 {
            let total = case_pmf(n, CaseTag::CaseI, rate(2.0), t, d) + case_pmf(n, CaseTag::CaseII, rate(2.0), t, d);
            assert!((total - count_pmf(n, rate(2.0), t, d)).abs() < 1e-15);
        }
    }

    #[test]
    fn gradient_map_masks_impossible_pixels() {
        let streams =
            EventCollection::new(3, 1, vec![bounded(&[]), bounded(&[0.4]), bounded(&[0.1, 0.2, 0.3])]).unwrap();
        let flux = FluxMap::new(Image::new(3, 1, vec![0.0, 0.0, 2.0]).unwrap()).unwrap();
        let map = grad_log_likelihood_map(&streams, &flux).unwrap();
        assert_eq!(map.gradient.data()[0], -1.0);
        assert_eq!(map.invalid, vec![false, true, false]);
        assert_eq!(map.gradient.data()[1], 0.0);
        assert_eq!(
            map.gradient.data()[2],
            grad_log_likelihood(&bounded(&[0.1, 0.2, 0.3]), rate(2.0)).unwrap()
        );

        let wrong = FluxMap::uniform(1, 3, rate(1.0)).unwrap();
        assert!(matches!(
            grad_log_likelihood_map(&streams, &wrong),
            Err(Error::Input(_))
        ));
    }
}
