//! Independent reference computations shared by the integration tests. Nothing
//! here calls the library's numerical routines.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use spad_core::simulator::{EventStream, SensorConfig};

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
pub fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn step(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    if a == b {
        return 0.0;
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 30)
}

pub fn factorial(n: u64) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// Erlang density written out from its definition.
pub fn erlang_density(t: f64, n: u64, rate: f64) -> f64 {
    if t < 0.0 {
        return 0.0;
    }
    rate.powi(n as i32) * t.powi(n as i32 - 1) * (-rate * t).exp() / factorial(n - 1)
}

/// Log-likelihood of a stream as the sum of its log factors: the first arrival,
/// each dead-time-shifted gap, and the probability of no arrival in the
/// remaining live time (Case I) or nothing (Case II).
pub fn product_form_log_likelihood(times: &[f64], exposure: Option<f64>, dead: f64, rate: f64) -> f64 {
    let mut log_density = 0.0f64;
    let mut previous_free = 0.0;
    for &t in times {
        let wait = t - previous_free;
        assert!(wait >= -1e-15, "event inside dead time");
        log_density += rate.ln() - rate * wait.max(0.0);
        previous_free = t + dead;
    }
    if let Some(total) = exposure {
        let remaining = total - previous_free;
        if remaining > 0.0 {
            log_density -= rate * remaining;
        }
    }
    log_density
}

/// Probability of exactly one detection in `[0, T]`, by integrating over the
/// first arrival time.
pub fn one_detection_probability(rate: f64, exposure: f64, dead: f64) -> f64 {
    let f = |t: f64| rate * (-rate * t).exp() * (-rate * (exposure - t - dead).max(0.0)).exp();
    simpson(&f, 0.0, exposure, 1e-13)
}

/// Probability of exactly two detections, as a nested integral over both
/// arrival times.
pub fn two_detection_probability(rate: f64, exposure: f64, dead: f64) -> f64 {
    let outer = |t1: f64| {
        let start = t1 + dead;
        if start >= exposure {
            return 0.0;
        }
        let inner = |t2: f64| rate * (-rate * (t2 - start)).exp() * (-rate * (exposure - t2 - dead).max(0.0)).exp();
        rate * (-rate * t1).exp() * simpson(&inner, start, exposure, 1e-13)
    };
    // the integrand has a kink at t1 = T - 2τ; split there
    let kink = (exposure - 2.0 * dead).clamp(0.0, exposure);
    simpson(&outer, 0.0, kink, 1e-13) + simpson(&outer, kink, exposure, 1e-13)
}

/// Maximizes `g` over `[lo, hi]` by a dense scan followed by two refinements.
pub fn grid_argmax(g: &dyn Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let (mut lo, mut hi) = (lo, hi);
    let points = 200_000;
    let mut best = lo;
    for _ in 0..3 {
        let h = (hi - lo) / points as f64;
        let mut best_value = f64::NEG_INFINITY;
        for i in 0..=points {
            let x = lo + h * i as f64;
            let v = g(x);
            if v > best_value {
                best_value = v;
                best = x;
            }
        }
        lo = (best - 2.0 * h).max(lo);
        hi = (best + 2.0 * h).min(hi);
    }
    best
}

/// Brute-force MAP flux for a single stream with a Gaussian prior
/// `N(mean, std^2)` on `x = λ / a - b`, searched over `x ∈ [-1, 1]`.
pub fn gaussian_map_flux(stream: &EventStream, a: f64, b: f64, mean: f64, std: f64) -> f64 {
    let times: Vec<f64> = stream.times().collect();
    let exposure = stream.exposure().map(|s| s.get());
    let dead = stream.dead_time().get();
    let n = times.len() as f64;
    // the log-likelihood depends on the stream only through N and the live time
    let live = match exposure {
        Some(total) => {
            let last = times.last().copied().unwrap_or(f64::NEG_INFINITY);
            if last + dead <= total {
                total - n * dead
            } else {
                last - (n - 1.0) * dead
            }
        }
        None => times.last().copied().unwrap_or(0.0) - (n - 1.0) * dead,
    };
    let objective = |x: f64| {
        let flux = a * (x + b);
        let log_lik = if flux <= 0.0 {
            if n > 0.0 {
                f64::NEG_INFINITY
            } else {
                0.0
            }
        } else {
            n * flux.ln() - flux * live
        };
        log_lik - 0.5 * ((x - mean) / std).powi(2)
    };
    a * (grid_argmax(&objective, -1.0, 1.0) + b)
}

/// Sensor with unit quantum efficiency and no nuisance effects, so that the
/// simulated detection rate equals the requested flux.
pub fn ideal_sensor(exposure: f64, dead: f64) -> SensorConfig {
    SensorConfig {
        quantum_efficiency: 1.0,
        exposure,
        dead_time: dead,
        ..SensorConfig::default()
    }
    .without_nuisances()
}

/// Median of a slice, averaging the middle pair for even lengths.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
    let m = v.len() / 2;
    if v.len().is_multiple_of(2) {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}

/// Binary 8-bit PGM written byte by byte.
pub fn pgm8(width: usize, height: usize, pixel: impl Fn(usize, usize) -> u8) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    for r in 0..height {
        for c in 0..width {
            out.push(pixel(r, c));
        }
    }
    out
}

pub fn spad(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spad"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("spad binary runs")
}

pub fn spad_ok(args: &[&str]) -> String {
    let out = spad(args);
    assert!(
        out.status.success(),
        "spad {args:?} failed: {}\n{}",
        String::from_utf8_lossy(&out.stderr),
        String::from_utf8_lossy(&out.stdout)
    );
    String::from_utf8(out.stdout).expect("utf-8 output")
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

pub fn write(dir: &Path, name: &str, bytes: &[u8]) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, bytes).expect("write test file");
    path
}

/// Checks the stored invariants of an event file independently of the reader:
/// returns per-pixel counts, or an error naming the first violation.
pub fn check_event_file(bytes: &[u8]) -> Result<Vec<u32>, String> {
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    if bytes.len() < 36 || &bytes[..8] != b"SPADEVT1" || u32_at(8) != 1 {
        return Err("bad header".into());
    }
    let (h, w) = (u32_at(12) as usize, u32_at(16) as usize);
    let exposure_ps = u64_at(20) * 1000;
    let dead_ps = u64_at(28) * 1000;
    let mut at = 36;
    let mut counts = Vec::with_capacity(h * w);
    for pixel in 0..h * w {
        let n = u32_at(at);
        at += 4;
        let mut prev: Option<u64> = None;
        for _ in 0..n {
            let t = u64_at(at);
            at += 8;
            if exposure_ps > 0 && t > exposure_ps {
                return Err(format!("pixel {pixel}: event after exposure"));
            }
            if let Some(p) = prev {
                if t <= p || t - p < dead_ps {
                    return Err(format!("pixel {pixel}: spacing {} ps", t - p));
                }
            }
            prev = Some(t);
        }
        counts.push(n);
    }
    if at != bytes.len() {
        return Err("trailing bytes".into());
    }
    Ok(counts)
}
