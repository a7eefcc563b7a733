//! Grayscale rasters and the primitives shared by every feature extractor:
//! summed-area tables, box sums, Haar wavelet responses and Gaussian blur.

pub(crate) mod blur;
pub(crate) mod integral;
pub mod pnm;

pub use blur::{gaussian_blur, gaussian_kernel};
pub use integral::{HaarResponse, IntegralImage};
pub use pnm::{load_image, save_pgm};

use crate::error::{Error, Result};

/// Row-major grayscale image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "expected {} samples for {width}x{height}, got {}",
                width * height,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidImage(format!("intensity {v} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel, clamping to `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let v = f(x, y);
                data.push(if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) });
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Self {
        Self::from_fn(width, height, |_, _| value)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Sample with coordinates clamped to the image edge.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.get(x, y)
    }

    /// Bilinear sample; `None` outside the pixel-center hull.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> Option<f64> {
        if !(x >= 0.0 && y >= 0.0) || x > (self.width - 1) as f64 || y > (self.height - 1) as f64 {
            return None;
        }
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
        let bottom = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
        Some(top * (1.0 - fy) + bottom * fy)
    }

    /// Applies `f` to every intensity, clamping the result to `[0, 1]`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v).clamp(0.0, 1.0)).collect(),
        }
    }

    pub fn mirror_horizontal(&self) -> Self {
        Self::from_fn(self.width, self.height, |x, y| self.get(self.width - 1 - x, y))
    }

    /// 90 degree clockwise rotation: `(x, y)` moves to `(height - 1 - y, x)`.
    pub fn rotate90(&self) -> Self {
        let (w, h) = (self.height, self.width);
        Self::from_fn(w, h, |x, y| self.get(y, self.height - 1 - x))
    }

    /// Keeps every second pixel, rounding the size up so both borders survive.
    pub fn downsample2(&self) -> Self {
        let w = self.width.div_ceil(2);
        let h = self.height.div_ceil(2);
        Self::from_fn(w, h, |x, y| self.get(2 * x, 2 * y))
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub(crate) fn from_raw_unchecked(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self {
            width,
            height,
            data,
        }
    }
}

/// Unconstrained real-valued raster (difference-of-Gaussian layers, gradients).
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn difference(a: &Image, b: &Image) -> Self {
        debug_assert_eq!((a.width, a.height), (b.width, b.height));
        Self {
            width: a.width,
            height: a.height,
            data: a.data.iter().zip(&b.data).map(|(x, y)| x - y).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(Image::new(0, 3, vec![]).is_err());
        assert!(Image::new(2, 2, vec![0.0; 3]).is_err());
        assert!(Image::new(1, 1, vec![1.5]).is_err());
        assert!(Image::new(1, 1, vec![1.0]).is_ok());
    }

    #[test]
    fn rotate90_moves_pixels_clockwise() {
        let img = Image::from_fn(3, 2, |x, y| (x + 3 * y) as f64 / 10.0);
        let r = img.rotate90();
        assert_eq!((r.width(), r.height()), (2, 3));
        for y in 0..2 {
            for x in 0..3 {
                assert_eq!(r.get(2 - 1 - y, x), img.get(x, y));
            }
        }
    }

    #[test]
    fn downsample_keeps_both_borders_for_odd_sizes() {
        let img = Image::from_fn(5, 5, |x, y| (x + 5 * y) as f64 / 25.0);
        let d = img.downsample2();
        assert_eq!((d.width(), d.height()), (3, 3));
        assert_eq!(d.get(2, 2), img.get(4, 4));
        assert_eq!(Image::constant(64, 64, 0.1).downsample2().width(), 32);
    }
}
