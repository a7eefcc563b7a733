//! Seeded synthetic images for tests, benchmarks and the acceptance suite.
//!
//! Every generator is a pure function of its arguments, so a fixture can be
//! regenerated anywhere instead of being checked in.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::image::blur::blur_unchecked;
use crate::image::Image;
use crate::rng::{self, seeded};

const ROLE_CONCEPT: u64 = 0x434f_4e43;
const ROLE_NEGATIVE: u64 = 0x4e45_4741;
const ROLE_FRAME: u64 = 0x4652_4d45;

/// White noise blurred with `sigma`, rescaled to mean 0.5 and standard
/// deviation 0.2, then clipped to `[0, 1]`.
pub fn smooth_noise(w: usize, h: usize, sigma: f64, seed: u64) -> Image {
    let mut rng = seeded(seed);
    let raw = Image::from_fn(w, h, |_, _| rng.random::<f64>());
    let blurred = blur_unchecked(&raw, sigma);
    let n = (w * h) as f64;
    let mean = blurred.sum() / n;
    let var = blurred.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let scale = if var > 0.0 { 0.2 / var.sqrt() } else { 0.0 };
    blurred.map(|v| 0.5 + scale * (v - mean))
}

/// Random light and dark Gaussian blobs on mid-grey, clipped to `[0, 1]`; a
/// strong source of scale-space extrema.
pub fn blob_texture(w: usize, h: usize, n_blobs: usize, seed: u64) -> Image {
    let mut rng = seeded(seed);
    let blobs: Vec<(f64, f64, f64, f64)> = (0..n_blobs)
        .map(|_| {
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            (
                rng.random_range(0.0..w as f64),
                rng.random_range(0.0..h as f64),
                rng.random_range(2.0..9.0),
                sign * rng.random_range(0.3..1.0),
            )
        })
        .collect();
    let mut data = vec![0.0; w * h];
    for &(bx, by, s, a) in &blobs {
        let r = (3.0 * s) as isize;
        let (cx, cy) = (bx as isize, by as isize);
        for y in (cy - r).max(0)..(cy + r + 1).min(h as isize) {
            for x in (cx - r).max(0)..(cx + r + 1).min(w as isize) {
                let d2 = (x as f64 - bx).powi(2) + (y as f64 - by).powi(2);
                data[y as usize * w + x as usize] += a * (-d2 / (2.0 * s * s)).exp();
            }
        }
    }
    Image::from_fn(w, h, |x, y| 0.5 + 0.45 * data[y * w + x])
}

/// Fine smooth noise over coarse smooth noise: dense, non-repetitive detail
/// at several scales.
pub fn textured(w: usize, h: usize, seed: u64) -> Image {
    let fine = smooth_noise(w, h, 2.0, seed);
    let coarse = smooth_noise(w, h, 6.0, seed ^ 0x9e37_79b9);
    Image::from_fn(w, h, |x, y| 0.6 * fine.get(x, y) + 0.4 * coarse.get(x, y))
}

/// Positive class of the concept fixture: a plaid of two random sinusoidal
/// gratings with period 8 to 20 px, under mild noise.
pub fn concept_image(size: usize, seed: u64) -> Image {
    let mut rng = seeded(seed);
    let mut grating = || {
        let theta = rng.random_range(0.0..std::f64::consts::PI);
        let period = rng.random_range(8.0..20.0);
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        let k = std::f64::consts::TAU / period;
        (k * theta.cos(), k * theta.sin(), phase)
    };
    let (a, b) = (grating(), grating());
    let contrast = rng.random_range(0.5..1.0);
    let noise = Normal::new(0.0, 0.03).unwrap();
    Image::from_fn(size, size, |x, y| {
        let (x, y) = (x as f64, y as f64);
        let g = (a.0 * x + a.1 * y + a.2).sin() + (b.0 * x + b.1 * y + b.2).sin();
        0.5 + 0.22 * contrast * g + noise.sample(&mut rng)
    })
}

/// Negative class of the concept fixture: isotropic smooth noise at a random
/// correlation length.
pub fn structured_noise(size: usize, seed: u64) -> Image {
    let mut rng = seeded(seed);
    let sigma = rng.random_range(1.0..4.0);
    let lo = rng.random_range(0.0..0.3);
    let hi = rng.random_range(0.7..1.0);
    smooth_noise(size, size, sigma, rng.random()).map(|v| lo + (hi - lo) * v)
}

/// Labelled concept fixture: `n_pos` positives then `n_neg` negatives.
pub fn concept_dataset(n_pos: usize, n_neg: usize, size: usize, seed: u64) -> Vec<(Image, bool)> {
    let pos = (0..n_pos).map(|i| (concept_image(size, rng::derive(seed, ROLE_CONCEPT, i as u64)), true));
    let neg = (0..n_neg)
        .map(|i| (structured_noise(size, rng::derive(seed, ROLE_NEGATIVE, i as u64)), false));
    pos.chain(neg).collect()
}

/// Applies `h` to a point.
pub fn project(h: &Matrix3<f64>, x: f64, y: f64) -> (f64, f64) {
    let p = h * Vector3::new(x, y, 1.0);
    (p.x / p.z, p.y / p.z)
}

/// Renders `src` through `h` (source to output coordinates) onto `background`
/// with bilinear inverse mapping.
pub fn warp(src: &Image, h: &Matrix3<f64>, background: &Image) -> Image {
    let inv = h.try_inverse().expect("warp homography must be invertible");
    Image::from_fn(background.width(), background.height(), |x, y| {
        let (sx, sy) = project(&inv, x as f64, y as f64);
        src.sample_bilinear(sx, sy)
            .unwrap_or_else(|| background.get(x, y))
    })
}

/// Adds zero-mean Gaussian noise, clamping to `[0, 1]`.
pub fn add_noise(img: &Image, sigma: f64, seed: u64) -> Image {
    let mut rng = seeded(seed);
    let n = Normal::new(0.0, sigma).unwrap();
    Image::from_fn(img.width(), img.height(), |x, y| img.get(x, y) + n.sample(&mut rng))
}

/// Reference corners in the order top-left, top-right, bottom-right,
/// bottom-left.
pub fn corners(w: usize, h: usize) -> [(f64, f64); 4] {
    let (w, h) = ((w - 1) as f64, (h - 1) as f64);
    [(0.0, 0.0), (w, 0.0), (w, h), (0.0, h)]
}

/// A random view of a `src_w × src_h` plane centred in an `out_w × out_h`
/// frame: scale 0.7 to 0.9, rotation within ±15°, shift within ±8 px and a mild
/// perspective tilt.
pub fn random_view(src_w: usize, src_h: usize, out_w: usize, out_h: usize, seed: u64) -> Matrix3<f64> {
    let mut rng = seeded(seed);
    let s = rng.random_range(0.7..0.9);
    let t = rng.random_range(-15f64..15.0).to_radians();
    let (c, sn) = (t.cos(), t.sin());
    let px = rng.random_range(-4e-4..4e-4);
    let py = rng.random_range(-4e-4..4e-4);
    let dx = rng.random_range(-8.0..8.0);
    let dy = rng.random_range(-8.0..8.0);
    let to_origin = Matrix3::new(
        1.0, 0.0, -(src_w as f64 - 1.0) / 2.0,
        0.0, 1.0, -(src_h as f64 - 1.0) / 2.0,
        0.0, 0.0, 1.0,
    );
    let similarity = Matrix3::new(s * c, -s * sn, 0.0, s * sn, s * c, 0.0, 0.0, 0.0, 1.0);
    let tilt = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, px, py, 1.0);
    let to_frame = Matrix3::new(
        1.0, 0.0, (out_w as f64 - 1.0) / 2.0 + dx,
        0.0, 1.0, (out_h as f64 - 1.0) / 2.0 + dy,
        0.0, 0.0, 1.0,
    );
    to_frame * tilt * similarity * to_origin
}

/// A frame showing `object` under a random view, on unrelated texture, with
/// pixel noise. Returns the frame and the true homography.
pub fn object_frame(object: &Image, out_w: usize, out_h: usize, noise: f64, seed: u64) -> (Image, Matrix3<f64>) {
    let h = random_view(object.width(), object.height(), out_w, out_h, rng::derive(seed, ROLE_FRAME, 0));
    let bg = smooth_noise(out_w, out_h, 3.0, rng::derive(seed, ROLE_FRAME, 1)).map(|v| 0.2 + 0.6 * v);
    let frame = add_noise(&warp(object, &h, &bg), noise, rng::derive(seed, ROLE_FRAME, 2));
    (frame, h)
}

/// A frame that does not contain the object.
pub fn negative_frame(out_w: usize, out_h: usize, seed: u64) -> Image {
    let base = textured(out_w, out_h, rng::derive(seed, ROLE_FRAME, 3));
    add_noise(&base, 0.02, rng::derive(seed, ROLE_FRAME, 4))
}
