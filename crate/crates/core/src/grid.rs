//! Row-major 2-D planes: normalized images, flux maps, gradient maps.

use crate::distributions::Rate;
use crate::error::{Error, Result};

/// A dense row-major plane of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::input("image dimensions must be positive"));
        }
        if data.len() != width * height {
            return Err(Error::input(format!(
                "expected {} values for a {width}x{height} image, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Image { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Image::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.shape() == other.shape()
    }

    pub(crate) fn check_shape(&self, other: &Image, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::input(format!(
                "{what}: shape {:?} does not match {:?}",
                other.shape(),
                self.shape()
            )))
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Image, f: impl Fn(f64, f64) -> f64) -> Result<Image> {
        self.check_shape(other, "zip_map")?;
        Ok(Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn norm_l2(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Peak signal-to-noise ratio in dB for images on a `[0, peak]` scale.
pub fn psnr(reference: &Image, estimate: &Image, peak: f64) -> Result<f64> {
    reference.check_shape(estimate, "psnr")?;
    let mse = reference
        .data()
        .iter()
        .zip(estimate.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / reference.len() as f64;
    Ok(10.0 * (peak * peak / mse).log10())
}

/// Per-pixel photon detection rate over a field of view.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxMap(Image);

impl FluxMap {
    pub fn new(image: Image) -> Result<Self> {
        if let Some(bad) = image.data().iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::input(format!(
                "flux values must be finite and >= 0, found {bad}"
            )));
        }
        Ok(FluxMap(image))
    }

    pub fn uniform(width: usize, height: usize, rate: Rate) -> Result<Self> {
        FluxMap::new(Image::filled(width, height, rate.get())?)
    }

    pub fn image(&self) -> &Image {
        &self.0
    }

    pub fn into_image(self) -> Image {
        self.0
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    pub fn rate(&self, index: usize) -> Rate {
        Rate::new(self.0.data()[index]).expect("flux map invariant")
    }

    pub fn rates(&self) -> impl Iterator<Item = Rate> + '_ {
        self.0.data().iter().map(|&v| Rate::new(v).expect("flux map invariant"))
    }
}
