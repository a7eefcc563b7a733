use super::Image;
use crate::error::{Error, Result};

/// Sampled Gaussian of radius `ceil(3 sigma)`, normalized to unit sum.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let denom = 2.0 * sigma * sigma;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / denom).exp())
        .collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    k
}

/// Separable Gaussian blur with clamp-to-edge borders.
pub fn gaussian_blur(img: &Image, sigma: f64) -> Result<Image> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "blur sigma must be positive, got {sigma}"
        )));
    }
    Ok(blur_unchecked(img, sigma))
}

pub(crate) fn blur_unchecked(img: &Image, sigma: f64) -> Image {
    let kernel = gaussian_kernel(sigma);
    let r = (kernel.len() / 2) as isize;
    let (w, h) = (img.width(), img.height());
    let src = img.data();

    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                let sx = (x as isize + k as isize - r).clamp(0, w as isize - 1) as usize;
                acc += kv * row[sx];
            }
            tmp[y * w + x] = acc;
        }
    }

    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for (k, kv) in kernel.iter().enumerate() {
            let sy = (y as isize + k as isize - r).clamp(0, h as isize - 1) as usize;
            let src_row = &tmp[sy * w..(sy + 1) * w];
            let dst_row = &mut out[y * w..(y + 1) * w];
            for (d, s) in dst_row.iter_mut().zip(src_row) {
                *d += kv * s;
            }
        }
    }
    // Convex combinations of [0, 1] values; clamp only rounding excursions.
    for v in &mut out {
        *v = v.clamp(0.0, 1.0);
    }
    Image::from_raw_unchecked(w, h, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_positive_sigma() {
        let img = Image::constant(4, 4, 0.5);
        assert!(gaussian_blur(&img, 0.0).is_err());
        assert!(gaussian_blur(&img, -1.0).is_err());
        assert!(gaussian_blur(&img, f64::NAN).is_err());
    }

    #[test]
    fn constant_image_is_fixed_point() {
        let img = Image::constant(12, 9, 0.37);
        let out = gaussian_blur(&img, 2.3).unwrap();
        assert!(out.data().iter().all(|v| (v - 0.37).abs() < 1e-9));
    }

    #[test]
    fn impulse_peak_equals_kernel_peak_squared() {
        // Separable blur of a centered impulse peaks at g(0)^2 with
        // g(0) = 1 / sum_{|i| <= 3} exp(-i^2 / 2).
        let g0 = 1.0 / (-3i32..=3).map(|i| (-(i * i) as f64 / 2.0).exp()).sum::<f64>();
        let img = Image::from_fn(21, 21, |x, y| if x == 10 && y == 10 { 1.0 } else { 0.0 });
        let out = gaussian_blur(&img, 1.0).unwrap();
        assert!((out.get(10, 10) - g0 * g0).abs() < 1e-12);
        assert!((out.sum() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn semigroup_property_away_from_borders() {
        let img = Image::from_fn(64, 64, |x, y| {
            0.5 + 0.4 * ((x as f64 * 0.37).sin() * (y as f64 * 0.23).cos())
        });
        let (s1, s2) = (1.2, 1.6);
        let twice = gaussian_blur(&gaussian_blur(&img, s1).unwrap(), s2).unwrap();
        let once = gaussian_blur(&img, (s1 * s1 + s2 * s2).sqrt()).unwrap();
        for y in 16..48 {
            for x in 16..48 {
                assert!((twice.get(x, y) - once.get(x, y)).abs() < 1e-3);
            }
        }
    }
}
