//! Dense single-scale sampling with a 64-dimensional SURF-like descriptor.
//!
//! At sampling scale `s` points sit on a grid with spacing `6s`. Each point
//! is described by a `24s` window split into 4x4 subregions of `6s` pixels.
//! Every pixel whose `2s` Haar wavelet fits inside the window contributes
//! its `(dx, dy, |dx|, |dy|)` to the subregion that contains it. There is no
//! orientation assignment and no Gaussian weighting. The 64-vector is
//! L2-normalized unless the patch is flat, in which case it stays zero.

use crate::error::{Error, Result};
use crate::features::{Descriptor, Feature, Keypoint};
use crate::image::integral::SummedTable;
use crate::image::{Image, IntegralImage};

pub const DURF_DIM: usize = 64;
const GRID: usize = 4;
/// Raw vectors below this norm come from flat patches; anything left is
/// integral-image round-off and is reported as the zero descriptor.
pub const FLAT_NORM: f64 = 1e-6;

/// Sampling geometry derived from the scale `s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplingConfig {
    scale: usize,
}

impl SamplingConfig {
    pub fn new(scale: usize) -> Result<Self> {
        if scale == 0 {
            return Err(Error::InvalidParameter("sampling scale must be >= 1".into()));
        }
        Ok(Self { scale })
    }

    pub fn scale(&self) -> usize {
        self.scale
    }

    /// Grid spacing, `6s`.
    pub fn interval(&self) -> usize {
        6 * self.scale
    }

    /// Descriptor window side, `24s`.
    pub fn window(&self) -> usize {
        24 * self.scale
    }

    /// Haar wavelet side, `2s`.
    pub fn wavelet_size(&self) -> usize {
        2 * self.scale
    }

    fn subregion(&self) -> usize {
        6 * self.scale
    }
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self { scale: 2 }
    }
}

fn grid_axis(len: usize, cfg: &SamplingConfig) -> impl Iterator<Item = usize> + use<> {
    let cfg = *cfg;
    let half = cfg.window() / 2;
    // A center c covers [c - half, c + half - 1].
    let last = len.checked_sub(half).unwrap_or(0);
    (half..=last).step_by(cfg.interval()).filter(move |_| len >= cfg.window())
}

/// Grid centers whose full window lies inside a `width x height` image, row-major.
pub fn dense_grid(width: usize, height: usize, cfg: &SamplingConfig) -> Vec<Keypoint> {
    let xs: Vec<usize> = grid_axis(width, cfg).collect();
    grid_axis(height, cfg)
        .flat_map(|y| {
            xs.iter()
                .map(move |&x| Keypoint::dense(x as f64, y as f64, cfg.scale as f64))
        })
        .collect()
}

/// Pixel range of the window around `c` and the range of wavelet centers
/// whose support stays inside it.
struct Window {
    origin_x: usize,
    origin_y: usize,
    lo_x: usize,
    hi_x: usize,
    lo_y: usize,
    hi_y: usize,
}

fn window_at(
    width: usize,
    height: usize,
    kp: &Keypoint,
    cfg: &SamplingConfig,
) -> Result<Window> {
    let half = cfg.window() / 2;
    let s = cfg.scale;
    let (cx, cy) = (kp.x.round(), kp.y.round());
    if cx < half as f64
        || cy < half as f64
        || cx + half as f64 > width as f64
        || cy + half as f64 > height as f64
    {
        return Err(Error::OutOfBounds(format!(
            "descriptor window {} at ({}, {}) in {width}x{height} image",
            cfg.window(),
            kp.x,
            kp.y
        )));
    }
    let (cx, cy) = (cx as usize, cy as usize);
    Ok(Window {
        origin_x: cx - half,
        origin_y: cy - half,
        lo_x: cx - half + s,
        hi_x: cx + half - s,
        lo_y: cy - half + s,
        hi_y: cy + half - s,
    })
}

/// Per-subregion `(sum dx, sum dy, sum |dx|, sum |dy|)` before normalization,
/// in row-major subregion order.
pub fn durf_raw(
    ii: &IntegralImage,
    kp: &Keypoint,
    cfg: &SamplingConfig,
) -> Result<[f64; DURF_DIM]> {
    let win = window_at(ii.width(), ii.height(), kp, cfg)?;
    let half = cfg.scale;
    let sub = cfg.subregion();
    let mut raw = [0.0; DURF_DIM];
    for py in win.lo_y..=win.hi_y {
        let row = (py - win.origin_y) / sub;
        for px in win.lo_x..=win.hi_x {
            let col = (px - win.origin_x) / sub;
            let r = ii.haar_unchecked(px, py, half);
            let cell = &mut raw[(row * GRID + col) * 4..][..4];
            cell[0] += r.dx;
            cell[1] += r.dy;
            cell[2] += r.dx.abs();
            cell[3] += r.dy.abs();
        }
    }
    Ok(raw)
}

/// DURF descriptor of one point, computed directly from the integral image.
pub fn durf_descriptor(
    ii: &IntegralImage,
    kp: &Keypoint,
    cfg: &SamplingConfig,
) -> Result<Descriptor> {
    Ok(Descriptor::normalized_above(&durf_raw(ii, kp, cfg)?, FLAT_NORM))
}

/// Summed-area tables of `dx`, `dy`, `|dx|` and `|dy|` over every wavelet
/// center of the image. Each subregion sum then costs four lookups per
/// channel instead of one Haar evaluation per pixel.
pub struct ResponseTables {
    tables: [SummedTable; 4],
}

impl ResponseTables {
    pub fn new(ii: &IntegralImage, cfg: &SamplingConfig) -> Self {
        let (w, h) = (ii.width(), ii.height());
        let half = cfg.scale;
        let mut maps = [
            vec![0.0; w * h],
            vec![0.0; w * h],
            vec![0.0; w * h],
            vec![0.0; w * h],
        ];
        if w >= 2 * half && h >= 2 * half {
            for y in half..=h - half {
                for x in half..=w - half {
                    let r = ii.haar_unchecked(x, y, half);
                    let i = y * w + x;
                    maps[0][i] = r.dx;
                    maps[1][i] = r.dy;
                    maps[2][i] = r.dx.abs();
                    maps[3][i] = r.dy.abs();
                }
            }
        }
        Self {
            tables: maps.map(|m| SummedTable::from_values(w, h, &m)),
        }
    }

    pub fn descriptor(
        &self,
        width: usize,
        height: usize,
        kp: &Keypoint,
        cfg: &SamplingConfig,
    ) -> Result<Descriptor> {
        let win = window_at(width, height, kp, cfg)?;
        let sub = cfg.subregion();
        let mut raw = [0.0; DURF_DIM];
        for row in 0..GRID {
            let y0 = (win.origin_y + row * sub).max(win.lo_y);
            let y1 = (win.origin_y + (row + 1) * sub - 1).min(win.hi_y);
            for col in 0..GRID {
                let x0 = (win.origin_x + col * sub).max(win.lo_x);
                let x1 = (win.origin_x + (col + 1) * sub - 1).min(win.hi_x);
                let cell = &mut raw[(row * GRID + col) * 4..][..4];
                for (c, t) in cell.iter_mut().zip(&self.tables) {
                    *c = t.rect(x0, y0, x1, y1);
                }
            }
        }
        Ok(Descriptor::normalized_above(&raw, FLAT_NORM))
    }
}

/// Dense grid followed by one descriptor per grid point, in grid order.
pub fn extract_durf(img: &Image, cfg: &SamplingConfig) -> Vec<Feature> {
    let grid = dense_grid(img.width(), img.height(), cfg);
    if grid.is_empty() {
        return Vec::new();
    }
    let ii = IntegralImage::new(img);
    let tables = ResponseTables::new(&ii, cfg);
    grid.into_iter()
        .map(|kp| {
            let descriptor = tables
                .descriptor(img.width(), img.height(), &kp, cfg)
                .expect("grid points keep their window inside the image");
            Feature {
                keypoint: kp,
                descriptor,
            }
        })
        .collect()
}
