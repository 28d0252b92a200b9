use crate::error::{Error, Result};
use crate::grid::{FluxMap, Image};

/// Affine map `λ = a (x + b)` from the normalized image domain to flux.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainTransform {
    a: f64,
    b: f64,
}

impl DomainTransform {
    /// Requires `a > 0` and `b >= 1` so that all of `[-1, 1]` maps to
    /// non-negative flux.
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::config(format!(
                "transform scale a must be finite and > 0, got {a}"
            )));
        }
        if !(b.is_finite() && b >= 1.0) {
            return Err(Error::config(format!(
                "transform offset b must be finite and >= 1, got {b}"
            )));
        }
        Ok(DomainTransform { a, b })
    }

    /// Maps `[-1, 1]` onto `[0, full_scale]`.
    pub fn for_full_scale(full_scale: f64) -> Result<Self> {
        DomainTransform::new(full_scale / 2.0, 1.0)
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn to_flux(&self, x: f64) -> f64 {
        self.a * (x + self.b)
    }

    pub fn from_flux(&self, flux: f64) -> f64 {
        flux / self.a - self.b
    }
}

pub fn domain_adapt(x_hat: &Image, transform: &DomainTransform) -> Result<FluxMap> {
    let flux = x_hat.map(|x| transform.to_flux(x));
    if let Some(i) = flux.data().iter().position(|&v| !v.is_finite() || v < 0.0) {
        return Err(Error::config(format!(
            "transform maps pixel {i} (x = {}) to invalid flux {}",
            x_hat.data()[i],
            flux.data()[i]
        )));
    }
    FluxMap::new(flux)
}

pub fn inverse_adapt(flux: &FluxMap, transform: &DomainTransform) -> Image {
    flux.image().map(|v| transform.from_flux(v))
}
