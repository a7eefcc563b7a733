use super::Image;
use crate::error::{Error, Result};

/// Summed-area table of arbitrary real values. Entry `(x, y)` holds the sum
/// over the inclusive rectangle `[0..=x] x [0..=y]`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct SummedTable {
    width: usize,
    height: usize,
    table: Vec<f64>,
}

impl SummedTable {
    pub(crate) fn from_values(width: usize, height: usize, values: &[f64]) -> Self {
        debug_assert_eq!(values.len(), width * height);
        let mut table = vec![0.0; width * height];
        for y in 0..height {
            let mut row = 0.0;
            for x in 0..width {
                row += values[y * width + x];
                let above = if y > 0 { table[(y - 1) * width + x] } else { 0.0 };
                table[y * width + x] = row + above;
            }
        }
        Self {
            width,
            height,
            table,
        }
    }

    #[inline]
    pub(crate) fn at(&self, x: usize, y: usize) -> f64 {
        self.table[y * self.width + x]
    }

    /// Inclusive rectangle sum; the caller guarantees bounds.
    #[inline]
    pub(crate) fn rect(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> f64 {
        let a = self.at(x1, y1);
        let b = if x0 > 0 { self.at(x0 - 1, y1) } else { 0.0 };
        let c = if y0 > 0 { self.at(x1, y0 - 1) } else { 0.0 };
        let d = if x0 > 0 && y0 > 0 {
            self.at(x0 - 1, y0 - 1)
        } else {
            0.0
        };
        a - b - c + d
    }
}

/// Integral image of an [`Image`]. Because intensities are non-negative the
/// table is monotone along rows and columns.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegralImage(SummedTable);

/// Signed Haar wavelet responses: right-minus-left and bottom-minus-top.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HaarResponse {
    pub dx: f64,
    pub dy: f64,
}

impl IntegralImage {
    pub fn new(img: &Image) -> Self {
        Self(SummedTable::from_values(img.width(), img.height(), img.data()))
    }

    pub fn width(&self) -> usize {
        self.0.width
    }

    pub fn height(&self) -> usize {
        self.0.height
    }

    /// Cumulative sum over `[0..=x] x [0..=y]`.
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.0.at(x, y)
    }

    pub fn total(&self) -> f64 {
        self.0.at(self.0.width - 1, self.0.height - 1)
    }

    /// Sum over the inclusive rectangle `[x0..=x1] x [y0..=y1]`.
    pub fn box_sum(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> Result<f64> {
        if x0 > x1 || y0 > y1 || x1 >= self.width() || y1 >= self.height() {
            return Err(Error::OutOfBounds(format!(
                "rectangle [{x0}..={x1}]x[{y0}..={y1}] in {}x{} image",
                self.width(),
                self.height()
            )));
        }
        Ok(self.0.rect(x0, y0, x1, y1))
    }

    /// Haar responses of an even `size` wavelet whose support is
    /// `[cx - size/2, cx + size/2 - 1]` horizontally (same vertically).
    pub fn haar_response(&self, cx: usize, cy: usize, size: usize) -> Result<HaarResponse> {
        if size == 0 || size % 2 != 0 {
            return Err(Error::InvalidParameter(format!(
                "wavelet size must be even and positive, got {size}"
            )));
        }
        let half = size / 2;
        if cx < half || cy < half || cx + half > self.width() || cy + half > self.height() {
            return Err(Error::OutOfBounds(format!(
                "wavelet of size {size} at ({cx}, {cy}) in {}x{} image",
                self.width(),
                self.height()
            )));
        }
        Ok(self.haar_unchecked(cx, cy, half))
    }

    #[inline]
    pub(crate) fn haar_unchecked(&self, cx: usize, cy: usize, half: usize) -> HaarResponse {
        let (x0, x1) = (cx - half, cx + half - 1);
        let (y0, y1) = (cy - half, cy + half - 1);
        let left = self.0.rect(x0, y0, cx - 1, y1);
        let right = self.0.rect(cx, y0, x1, y1);
        let top = self.0.rect(x0, y0, x1, cy - 1);
        let bottom = self.0.rect(x0, cy, x1, y1);
        HaarResponse {
            dx: right - left,
            dy: bottom - top,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;

    fn random_image(w: usize, h: usize, seed: u64) -> Image {
        let mut rng = seeded(seed);
        Image::from_fn(w, h, |_, _| rng.random::<f64>())
    }

    fn naive_sum(img: &Image, x0: usize, y0: usize, x1: usize, y1: usize) -> f64 {
        let mut s = 0.0;
        for y in y0..=y1 {
            for x in x0..=x1 {
                s += img.get(x, y);
            }
        }
        s
    }

    #[test]
    fn constant_table() {
        let ii = IntegralImage::new(&Image::constant(2, 2, 1.0));
        assert_eq!([ii.at(0, 0), ii.at(1, 0), ii.at(0, 1), ii.at(1, 1)], [1.0, 2.0, 2.0, 4.0]);
    }

    #[test]
    fn table_matches_naive_prefix_sums() {
        for seed in 0..20 {
            let img = random_image(8, 8, seed);
            let ii = IntegralImage::new(&img);
            assert_eq!(ii.at(0, 0), img.get(0, 0));
            for y in 0..8 {
                for x in 0..8 {
                    assert!((ii.at(x, y) - naive_sum(&img, 0, 0, x, y)).abs() < 1e-9);
                }
            }
            assert!((ii.total() - img.sum()).abs() <= 1e-9 * img.sum());
        }
    }

    #[test]
    fn box_sums() {
        let ii = IntegralImage::new(&Image::constant(3, 3, 1.0));
        assert_eq!(ii.box_sum(0, 0, 2, 2).unwrap(), 9.0);
        let img = random_image(5, 4, 3);
        let ii = IntegralImage::new(&img);
        assert!((ii.box_sum(2, 1, 2, 1).unwrap() - img.get(2, 1)).abs() < 1e-12);
        assert!(ii.box_sum(0, 0, 5, 0).is_err());
        assert!(ii.box_sum(2, 0, 1, 0).is_err());
    }

    #[test]
    fn haar_on_constant_and_step() {
        let ii = IntegralImage::new(&Image::constant(10, 10, 0.4));
        let r = ii.haar_response(5, 5, 4).unwrap();
        assert!(r.dx.abs() < 1e-12 && r.dy.abs() < 1e-12);

        let step = Image::from_fn(10, 10, |x, _| if x >= 5 { 1.0 } else { 0.0 });
        let r = IntegralImage::new(&step).haar_response(5, 5, 4).unwrap();
        assert!(r.dx > 0.0);
        assert_eq!(r.dy, 0.0);
    }

    #[test]
    fn haar_bounds_and_size_checks() {
        let ii = IntegralImage::new(&Image::constant(8, 8, 0.5));
        assert!(ii.haar_response(1, 4, 4).is_err());
        assert!(ii.haar_response(6, 4, 4).is_ok());
        assert!(ii.haar_response(7, 4, 4).is_err());
        assert!(ii.haar_response(4, 4, 3).is_err());
    }
}
