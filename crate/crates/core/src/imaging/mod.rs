//! Grayscale image carrier, file I/O, directional gradients and seeded
//! randomness shared by every stage of the pipeline.

mod gradient;
mod io;
mod rng;

pub use gradient::{gradients_4dir, DirectionalGradients};
pub use io::{encode_label_pgm, encode_pgm, load_image, save_image, ImageIoError};
pub use rng::{rng_from_seed, SeededRng};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ImageError {
    #[error("buffer length {len} does not match {width}x{height}")]
    SizeMismatch {
        width: usize,
        height: usize,
        len: usize,
    },
    #[error("image dimensions must be non-zero, got {width}x{height}")]
    Empty { width: usize, height: usize },
    #[error("non-finite intensity at index {0}")]
    NonFinite(usize),
}

/// Row-major single-channel image with intensities nominally in `[0, 1]`.
///
/// Pixel `(x, y)` lives at `data[y * width + x]`; the origin is top-left.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::Empty { width, height });
        }
        if data.len() != width * height {
            return Err(ImageError::SizeMismatch {
                width,
                height,
                len: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(ImageError::NonFinite(i));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Constant image. Panics on zero dimensions or a non-finite value.
    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self::new(width, height, vec![value; width * height]).expect("valid constant image")
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data).expect("valid generated image")
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[y * self.width + x] = value;
    }

    /// Pixel lookup with replicated borders.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.get(cx, cy)
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

    pub fn clamp_unit(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// Peak signal-to-noise ratio in dB for unit-range images.
pub fn psnr(reference: &GrayImage, test: &GrayImage) -> f64 {
    assert!(reference.same_shape(test), "psnr needs equal shapes");
    let mse = reference
        .data()
        .iter()
        .zip(test.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / reference.len() as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / mse).log10()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_buffers() {
        assert_eq!(
            GrayImage::new(2, 2, vec![0.0; 3]),
            Err(ImageError::SizeMismatch {
                width: 2,
                height: 2,
                len: 3
            })
        );
        assert!(matches!(
            GrayImage::new(0, 2, vec![]),
            Err(ImageError::Empty { .. })
        ));
        assert_eq!(
            GrayImage::new(1, 2, vec![0.0, f64::NAN]),
            Err(ImageError::NonFinite(1))
        );
    }

    #[test]
    fn clamped_lookup_replicates_edges() {
        let img = GrayImage::from_fn(3, 2, |x, y| (x + 10 * y) as f64);
        assert_eq!(img.get_clamped(-1, 0), 0.0);
        assert_eq!(img.get_clamped(5, 1), 12.0);
        assert_eq!(img.get_clamped(1, -3), 1.0);
    }

    #[test]
    fn psnr_of_identical_images_is_infinite() {
        let img = GrayImage::filled(4, 4, 0.3);
        assert!(psnr(&img, &img).is_infinite());
        let shifted = img.map(|v| v + 0.1);
        assert!((psnr(&img, &shifted) - 20.0).abs() < 1e-9);
    }
}
