//! Difference-of-Gaussians keypoints and 128-dimensional gradient
//! histogram descriptors, following Lowe (2004) without the initial 2x
//! upsampling.

use std::f64::consts::TAU;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::features::{wrap_angle, Descriptor, Feature, Keypoint};
use crate::image::blur::blur_unchecked;
use crate::image::{Image, Plane};

pub const SIFT_DIM: usize = 128;
/// Smallest accepted input side.
pub const MIN_INPUT_SIDE: usize = 32;
/// Octaves are added while both sides are at least this large.
const MIN_OCTAVE_SIDE: usize = 16;
const MAX_REFINE_STEPS: usize = 5;
const ORI_BINS: usize = 36;
const ORI_SIGMA_FACTOR: f64 = 1.5;
const DESC_WIDTH: usize = 4;
const DESC_BINS: usize = 8;
const DESC_HIST_FACTOR: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiftParams {
    /// Base scale of the first layer of octave 0.
    pub sigma0: f64,
    /// Layers per octave (S).
    pub intervals: usize,
    /// Minimum |DoG| at a refined extremum, on `[0, 1]` intensities.
    pub contrast_threshold: f64,
    /// Principal curvature ratio bound `r`.
    pub edge_ratio: f64,
    /// Blur assumed to be present in the input image.
    pub assumed_blur: f64,
    /// Secondary orientation peaks at or above this fraction of the maximum
    /// produce their own descriptor.
    pub peak_ratio: f64,
    pub descriptor_clamp: f64,
    /// Extrema closer than this to an octave border are ignored.
    pub border: usize,
}

impl Default for SiftParams {
    fn default() -> Self {
        Self {
            sigma0: 1.6,
            intervals: 3,
            contrast_threshold: 0.03,
            edge_ratio: 10.0,
            assumed_blur: 0.5,
            peak_ratio: 0.8,
            descriptor_clamp: 0.2,
            border: 5,
        }
    }
}

impl SiftParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("sigma0", self.sigma0),
            ("contrast_threshold", self.contrast_threshold),
            ("edge_ratio", self.edge_ratio),
            ("peak_ratio", self.peak_ratio),
            ("descriptor_clamp", self.descriptor_clamp),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be positive")));
            }
        }
        if self.intervals < 2 {
            return Err(Error::InvalidParameter("intervals must be >= 2".into()));
        }
        if !(self.assumed_blur >= 0.0) || self.assumed_blur >= self.sigma0 {
            return Err(Error::InvalidParameter(
                "assumed_blur must lie in [0, sigma0)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Octave {
    /// `S + 3` blurred images.
    pub gaussians: Vec<Image>,
    /// `S + 2` adjacent differences `gaussians[i + 1] - gaussians[i]`.
    pub dogs: Vec<Plane>,
}

impl Octave {
    pub fn width(&self) -> usize {
        self.gaussians[0].width()
    }

    pub fn height(&self) -> usize {
        self.gaussians[0].height()
    }
}

#[derive(Debug, Clone)]
pub struct ScaleSpace {
    pub octaves: Vec<Octave>,
    params: SiftParams,
    increments: Vec<f64>,
}

impl ScaleSpace {
    pub fn params(&self) -> &SiftParams {
        &self.params
    }

    /// Incremental blur applied to produce layer `i` of an octave from
    /// layer `i - 1`. Entry 0 is the blur applied to the input image to reach
    /// `sigma0`; later octaves start from a downsampled layer instead.
    pub fn blur_increments(&self) -> &[f64] {
        &self.increments
    }

    /// Nominal sigma of layer `i` of octave `o`, in input pixels.
    pub fn layer_sigma(&self, octave: usize, layer: usize) -> f64 {
        self.params.sigma0 * 2f64.powf(octave as f64 + layer as f64 / self.params.intervals as f64)
    }
}

pub fn build_scale_space(img: &Image, p: &SiftParams) -> Result<ScaleSpace> {
    p.validate()?;
    if img.width() < MIN_INPUT_SIDE || img.height() < MIN_INPUT_SIDE {
        return Err(Error::InvalidImage(format!(
            "SIFT needs at least {MIN_INPUT_SIDE}x{MIN_INPUT_SIDE}, got {}x{}",
            img.width(),
            img.height()
        )));
    }
    let s = p.intervals as f64;
    let layers = p.intervals + 3;
    let mut increments = Vec::with_capacity(layers);
    increments.push((p.sigma0 * p.sigma0 - p.assumed_blur * p.assumed_blur).sqrt());
    for i in 1..layers {
        let prev = p.sigma0 * 2f64.powf((i - 1) as f64 / s);
        let cur = p.sigma0 * 2f64.powf(i as f64 / s);
        increments.push((cur * cur - prev * prev).sqrt());
    }

    let mut octaves = Vec::new();
    let mut base = blur_unchecked(img, increments[0]);
    loop {
        let mut gaussians = Vec::with_capacity(layers);
        gaussians.push(base);
        for inc in &increments[1..] {
            let next = blur_unchecked(gaussians.last().unwrap(), *inc);
            gaussians.push(next);
        }
        let dogs = gaussians
            .windows(2)
            .map(|w| Plane::difference(&w[1], &w[0]))
            .collect();
        // Layer S carries twice the base sigma: the next octave starts there.
        let next = gaussians[p.intervals].downsample2();
        octaves.push(Octave { gaussians, dogs });
        if next.width() < MIN_OCTAVE_SIDE || next.height() < MIN_OCTAVE_SIDE {
            break;
        }
        base = next;
    }
    Ok(ScaleSpace {
        octaves,
        params: *p,
        increments,
    })
}

fn is_extremum(dogs: &[Plane], layer: usize, x: usize, y: usize, v: f64) -> bool {
    let maximum = v > 0.0;
    for plane in &dogs[layer - 1..=layer + 1] {
        for yy in y - 1..=y + 1 {
            let row = &plane.data[yy * plane.width + x - 1..=yy * plane.width + x + 1];
            for (dx, &n) in row.iter().enumerate() {
                if std::ptr::eq(plane, &dogs[layer]) && yy == y && dx == 1 {
                    continue;
                }
                if (maximum && n >= v) || (!maximum && n <= v) {
                    return false;
                }
            }
        }
    }
    true
}

struct Derivatives {
    gradient: Vector3<f64>,
    hessian: Matrix3<f64>,
}

fn derivatives(dogs: &[Plane], layer: usize, x: usize, y: usize) -> Derivatives {
    let (prev, cur, next) = (&dogs[layer - 1], &dogs[layer], &dogs[layer + 1]);
    let v = cur.get(x, y);
    let dx = 0.5 * (cur.get(x + 1, y) - cur.get(x - 1, y));
    let dy = 0.5 * (cur.get(x, y + 1) - cur.get(x, y - 1));
    let ds = 0.5 * (next.get(x, y) - prev.get(x, y));
    let dxx = cur.get(x + 1, y) + cur.get(x - 1, y) - 2.0 * v;
    let dyy = cur.get(x, y + 1) + cur.get(x, y - 1) - 2.0 * v;
    let dss = next.get(x, y) + prev.get(x, y) - 2.0 * v;
    let dxy = 0.25
        * (cur.get(x + 1, y + 1) - cur.get(x - 1, y + 1) - cur.get(x + 1, y - 1)
            + cur.get(x - 1, y - 1));
    let dxs = 0.25
        * (next.get(x + 1, y) - next.get(x - 1, y) - prev.get(x + 1, y) + prev.get(x - 1, y));
    let dys = 0.25
        * (next.get(x, y + 1) - next.get(x, y - 1) - prev.get(x, y + 1) + prev.get(x, y - 1));
    Derivatives {
        gradient: Vector3::new(dx, dy, ds),
        hessian: Matrix3::new(dxx, dxy, dxs, dxy, dyy, dys, dxs, dys, dss),
    }
}

/// Quadratic sub-pixel and sub-scale refinement. Each step moves the sample
/// by at most one position per axis; the accepted offset is within 0.5.
fn refine(
    oct: &Octave,
    p: &SiftParams,
    mut x: usize,
    mut y: usize,
    mut layer: usize,
) -> Option<(usize, usize, usize, Vector3<f64>, f64)> {
    let (w, h) = (oct.width(), oct.height());
    for _ in 0..MAX_REFINE_STEPS {
        let d = derivatives(&oct.dogs, layer, x, y);
        let offset = -d.hessian.lu().solve(&d.gradient)?;
        if !offset.iter().all(|v| v.is_finite()) {
            return None;
        }
        if offset.iter().all(|v| v.abs() <= 0.5) {
            let value = oct.dogs[layer].get(x, y) + 0.5 * d.gradient.dot(&offset);
            return Some((x, y, layer, offset, value));
        }
        let step = |v: f64| -> isize {
            if v > 0.5 {
                1
            } else if v < -0.5 {
                -1
            } else {
                0
            }
        };
        let nx = x as isize + step(offset[0]);
        let ny = y as isize + step(offset[1]);
        let nl = layer as isize + step(offset[2]);
        let b = p.border as isize;
        if nl < 1
            || nl > p.intervals as isize
            || nx < b
            || ny < b
            || nx >= w as isize - b
            || ny >= h as isize - b
        {
            return None;
        }
        x = nx as usize;
        y = ny as usize;
        layer = nl as usize;
    }
    None
}

fn passes_edge_test(dog: &Plane, x: usize, y: usize, r: f64) -> bool {
    let v = dog.get(x, y);
    let dxx = dog.get(x + 1, y) + dog.get(x - 1, y) - 2.0 * v;
    let dyy = dog.get(x, y + 1) + dog.get(x, y - 1) - 2.0 * v;
    let dxy = 0.25
        * (dog.get(x + 1, y + 1) - dog.get(x - 1, y + 1) - dog.get(x + 1, y - 1)
            + dog.get(x - 1, y - 1));
    let tr = dxx + dyy;
    let det = dxx * dyy - dxy * dxy;
    det > 0.0 && tr * tr * r < (r + 1.0) * (r + 1.0) * det
}

/// DoG extrema surviving refinement, contrast and edge tests, in input-image
/// coordinates. Orientation is left at 0; see [`sift_descriptor`].
pub fn detect_keypoints(ss: &ScaleSpace) -> Vec<Keypoint> {
    let p = &ss.params;
    let prefilter = 0.5 * p.contrast_threshold;
    let mut out = Vec::new();
    for (o, oct) in ss.octaves.iter().enumerate() {
        let (w, h) = (oct.width(), oct.height());
        if w <= 2 * p.border || h <= 2 * p.border {
            continue;
        }
        let factor = 2f64.powi(o as i32);
        for layer in 1..=p.intervals {
            let dog = &oct.dogs[layer];
            for y in p.border..h - p.border {
                for x in p.border..w - p.border {
                    let v = dog.get(x, y);
                    if v.abs() <= prefilter || !is_extremum(&oct.dogs, layer, x, y, v) {
                        continue;
                    }
                    let Some((rx, ry, rl, off, value)) = refine(oct, p, x, y, layer) else {
                        continue;
                    };
                    if value.abs() < p.contrast_threshold
                        || !passes_edge_test(&oct.dogs[rl], rx, ry, p.edge_ratio)
                    {
                        continue;
                    }
                    out.push(Keypoint {
                        x: (rx as f64 + off[0]) * factor,
                        y: (ry as f64 + off[1]) * factor,
                        scale: p.sigma0
                            * 2f64.powf(o as f64 + (rl as f64 + off[2]) / p.intervals as f64),
                        orientation: 0.0,
                        response: value.abs(),
                    });
                }
            }
        }
    }
    out
}

/// Octave, Gaussian layer and octave-relative position of a keypoint.
struct Placement<'a> {
    image: &'a Image,
    x: isize,
    y: isize,
    scale: f64,
}

fn place<'a>(ss: &'a ScaleSpace, kp: &Keypoint) -> Placement<'a> {
    let p = &ss.params;
    let s = p.intervals as f64;
    let t = s * (kp.scale / p.sigma0).log2();
    let last = ss.octaves.len() as isize - 1;
    let o = (((t - 0.5) / s).floor() as isize).clamp(0, last) as usize;
    let layer = (t - o as f64 * s).round().clamp(0.0, (p.intervals + 2) as f64) as usize;
    let factor = 2f64.powi(o as i32);
    Placement {
        image: &ss.octaves[o].gaussians[layer],
        x: (kp.x / factor).round() as isize,
        y: (kp.y / factor).round() as isize,
        scale: kp.scale / factor,
    }
}

#[inline]
fn gradient(img: &Image, x: usize, y: usize) -> (f64, f64) {
    let gx = img.get(x + 1, y) - img.get(x - 1, y);
    let gy = img.get(x, y + 1) - img.get(x, y - 1);
    ((gx * gx + gy * gy).sqrt(), wrap_angle(gy.atan2(gx)))
}

/// Dominant gradient orientations around the keypoint.
pub fn orientations(ss: &ScaleSpace, kp: &Keypoint) -> Vec<f64> {
    let pl = place(ss, kp);
    let img = pl.image;
    let sigma = ORI_SIGMA_FACTOR * pl.scale;
    let radius = (3.0 * sigma).round() as isize;
    let denom = 2.0 * sigma * sigma;
    let mut hist = [0.0f64; ORI_BINS];
    for dy in -radius..=radius {
        let y = pl.y + dy;
        if y < 1 || y >= img.height() as isize - 1 {
            continue;
        }
        for dx in -radius..=radius {
            let x = pl.x + dx;
            if x < 1 || x >= img.width() as isize - 1 {
                continue;
            }
            let (mag, ang) = gradient(img, x as usize, y as usize);
            let weight = (-((dx * dx + dy * dy) as f64) / denom).exp();
            let bin = (ORI_BINS as f64 * ang / TAU).round() as usize % ORI_BINS;
            hist[bin] += weight * mag;
        }
    }
    for _ in 0..2 {
        let prev = hist;
        for k in 0..ORI_BINS {
            hist[k] = 0.25 * prev[(k + ORI_BINS - 1) % ORI_BINS]
                + 0.5 * prev[k]
                + 0.25 * prev[(k + 1) % ORI_BINS];
        }
    }
    let max = hist.iter().copied().fold(0.0, f64::max);
    if !(max > 0.0) {
        return Vec::new();
    }
    let peak_floor = ss.params.peak_ratio * max;
    let mut out = Vec::new();
    for k in 0..ORI_BINS {
        let l = hist[(k + ORI_BINS - 1) % ORI_BINS];
        let c = hist[k];
        let r = hist[(k + 1) % ORI_BINS];
        if c > l && c > r && c >= peak_floor {
            let offset = 0.5 * (l - r) / (l - 2.0 * c + r);
            out.push(wrap_angle(TAU * (k as f64 + offset) / ORI_BINS as f64));
        }
    }
    out
}

/// Gradient histogram descriptor for a keypoint at a fixed orientation.
/// Returns `None` when the rotated window leaves the octave image or
/// carries no gradient energy.
pub fn descriptor_at(ss: &ScaleSpace, kp: &Keypoint, orientation: f64) -> Option<Descriptor> {
    let pl = place(ss, kp);
    let img = pl.image;
    let d = DESC_WIDTH as f64;
    let hist_width = DESC_HIST_FACTOR * pl.scale;
    let radius = (hist_width * std::f64::consts::SQRT_2 * (d + 1.0) * 0.5).round() as isize;
    if pl.x - radius < 1
        || pl.y - radius < 1
        || pl.x + radius > img.width() as isize - 2
        || pl.y + radius > img.height() as isize - 2
    {
        return None;
    }
    let (sin, cos) = orientation.sin_cos();
    let weight_denom = 2.0 * (0.5 * d) * (0.5 * d);
    let bins_per_rad = DESC_BINS as f64 / TAU;
    let mut hist = [0.0f64; DESC_WIDTH * DESC_WIDTH * DESC_BINS];

    for i in -radius..=radius {
        for j in -radius..=radius {
            // Offset expressed in the keypoint frame, in histogram cell units.
            let xr = (cos * j as f64 + sin * i as f64) / hist_width;
            let yr = (-sin * j as f64 + cos * i as f64) / hist_width;
            let rbin = yr + 0.5 * d - 0.5;
            let cbin = xr + 0.5 * d - 0.5;
            if rbin <= -1.0 || rbin >= d || cbin <= -1.0 || cbin >= d {
                continue;
            }
            let (mag, ang) = gradient(img, (pl.x + j) as usize, (pl.y + i) as usize);
            let obin = wrap_angle(ang - orientation) * bins_per_rad;
            let w = (-(xr * xr + yr * yr) / weight_denom).exp() * mag;

            let (r0, c0, o0) = (rbin.floor(), cbin.floor(), obin.floor());
            let (fr, fc, fo) = (rbin - r0, cbin - c0, obin - o0);
            for (dr, wr) in [(0, 1.0 - fr), (1, fr)] {
                let r = r0 as isize + dr;
                if r < 0 || r >= DESC_WIDTH as isize {
                    continue;
                }
                for (dc, wc) in [(0, 1.0 - fc), (1, fc)] {
                    let c = c0 as isize + dc;
                    if c < 0 || c >= DESC_WIDTH as isize {
                        continue;
                    }
                    for (dob, wo) in [(0, 1.0 - fo), (1, fo)] {
                        let ob = (o0 as usize + dob) % DESC_BINS;
                        let idx = (r as usize * DESC_WIDTH + c as usize) * DESC_BINS + ob;
                        hist[idx] += w * wr * wc * wo;
                    }
                }
            }
        }
    }

    let norm = hist.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return None;
    }
    let clamp = ss.params.descriptor_clamp;
    for v in &mut hist {
        *v = (*v / norm).min(clamp);
    }
    Some(Descriptor::normalized(&hist))
}

/// One descriptor per dominant orientation; empty when the keypoint's
/// window leaves the image.
pub fn sift_descriptor(ss: &ScaleSpace, kp: &Keypoint) -> Vec<Feature> {
    orientations(ss, kp)
        .into_iter()
        .filter_map(|ori| {
            let descriptor = descriptor_at(ss, kp, ori)?;
            Some(Feature {
                keypoint: Keypoint {
                    orientation: ori,
                    ..*kp
                },
                descriptor,
            })
        })
        .collect()
}

pub fn extract_sift(img: &Image, p: &SiftParams) -> Result<Vec<Feature>> {
    let ss = build_scale_space(img, p)?;
    Ok(detect_keypoints(&ss)
        .iter()
        .flat_map(|kp| sift_descriptor(&ss, kp))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob(size: usize, cx: f64, cy: f64, sigma: f64) -> Image {
        Image::from_fn(size, size, |x, y| {
            let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
            0.1 + 0.8 * (-d2 / (2.0 * sigma * sigma)).exp()
        })
    }

    #[test]
    fn params_validation() {
        assert!(SiftParams::default().validate().is_ok());
        let bad = SiftParams {
            intervals: 1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = SiftParams {
            contrast_threshold: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn rejects_small_images() {
        let p = SiftParams::default();
        assert!(build_scale_space(&Image::constant(31, 64, 0.5), &p).is_err());
        assert!(build_scale_space(&Image::constant(32, 32, 0.5), &p).is_ok());
    }

    #[test]
    fn octave_halving() {
        let ss = build_scale_space(&Image::constant(64, 64, 0.5), &SiftParams::default()).unwrap();
        let sizes: Vec<(usize, usize)> =
            ss.octaves.iter().map(|o| (o.width(), o.height())).collect();
        assert_eq!(sizes, vec![(64, 64), (32, 32), (16, 16)]);
        for oct in &ss.octaves {
            assert_eq!(oct.gaussians.len(), 6);
            assert_eq!(oct.dogs.len(), oct.gaussians.len() - 1);
        }
    }

    #[test]
    fn constant_image_has_flat_dog_and_no_keypoints() {
        let img = Image::constant(64, 48, 0.3);
        let p = SiftParams::default();
        let ss = build_scale_space(&img, &p).unwrap();
        for oct in &ss.octaves {
            for dog in &oct.dogs {
                assert!(dog.data.iter().all(|v| v.abs() < 1e-12));
            }
        }
        assert!(detect_keypoints(&ss).is_empty());
        assert!(extract_sift(&img, &p).unwrap().is_empty());
    }

    #[test]
    fn layer_sigmas_accumulate_to_nominal() {
        let p = SiftParams::default();
        let ss = build_scale_space(&Image::constant(128, 128, 0.5), &p).unwrap();
        let inc = ss.blur_increments();
        let mut carried: Option<f64> = None;
        for o in 0..ss.octaves.len() {
            let factor = 2f64.powi(o as i32);
            // Octave-relative sigma of layer 0.
            let mut rel = carried.unwrap_or_else(|| p.assumed_blur.hypot(inc[0]));
            assert!((rel * factor - ss.layer_sigma(o, 0)).abs() < 1e-6);
            for (i, step) in inc.iter().enumerate().skip(1) {
                rel = rel.hypot(*step);
                assert!((rel * factor - ss.layer_sigma(o, i)).abs() < 1e-6, "o={o} i={i}");
                if i == p.intervals {
                    // Halving the resolution halves the sigma in pixel units.
                    carried = Some(rel / 2.0);
                }
            }
        }
    }

    #[test]
    fn single_blob_gives_dominant_keypoint_at_center() {
        let img = blob(96, 48.0, 48.0, 4.0);
        let p = SiftParams::default();
        let ss = build_scale_space(&img, &p).unwrap();
        let kps = detect_keypoints(&ss);
        let best = kps
            .iter()
            .max_by(|a, b| a.response.total_cmp(&b.response))
            .expect("blob detected");
        assert!(((best.x - 48.0).powi(2) + (best.y - 48.0).powi(2)).sqrt() <= 2.0);
        assert!((2.8..=5.7).contains(&best.scale), "scale {}", best.scale);
    }

    #[test]
    fn descriptors_are_normalized_and_bounded() {
        let img = Image::from_fn(128, 128, |x, y| {
            let (fx, fy) = (x as f64, y as f64);
            0.5 + 0.25 * (fx * 0.21).sin() * (fy * 0.13).cos() + 0.2 * ((fx + fy) * 0.05).sin()
        });
        let feats = extract_sift(&img, &SiftParams::default()).unwrap();
        assert!(!feats.is_empty());
        for f in &feats {
            assert_eq!(f.descriptor.dim(), SIFT_DIM);
            assert!((f.descriptor.norm() - 1.0).abs() < 1e-6);
            assert!(f.descriptor.values().iter().all(|&v| (0.0..=0.5).contains(&v)));
            assert!((0.0..TAU).contains(&f.keypoint.orientation));
        }
    }
}
