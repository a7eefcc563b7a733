//! Keypoints, descriptors and the (keypoint, descriptor) pairs that every
//! extractor emits.

use std::f64::consts::TAU;

/// A sampled location. `scale` is the sampling scale for dense points and
/// the Gaussian sigma (in input pixels) for DoG keypoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub scale: f64,
    /// Radians in `[0, 2pi)`; always 0 for dense samples.
    pub orientation: f64,
    pub response: f64,
}

impl Keypoint {
    pub fn dense(x: f64, y: f64, scale: f64) -> Self {
        Self {
            x,
            y,
            scale,
            orientation: 0.0,
            response: 0.0,
        }
    }
}

pub(crate) fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Fixed-length feature vector: 64 values for DURF, 128 for SIFT.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    values: Vec<f32>,
}

impl Descriptor {
    pub fn new(values: Vec<f32>) -> Self {
        Self { values }
    }

    /// L2-normalizes `raw`; an all-zero vector stays zero.
    pub fn normalized(raw: &[f64]) -> Self {
        Self::normalized_above(raw, 0.0)
    }

    /// L2-normalizes `raw`, or returns zeros when its norm is at most `floor`.
    pub fn normalized_above(raw: &[f64], floor: f64) -> Self {
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        let values = if norm > floor {
            raw.iter().map(|v| (v / norm) as f32).collect()
        } else {
            vec![0.0; raw.len()]
        };
        Self { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn norm(&self) -> f64 {
        self.values
            .iter()
            .map(|&v| (v as f64) * (v as f64))
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Feature {
    pub keypoint: Keypoint,
    pub descriptor: Descriptor,
}

/// Squared Euclidean distance between two descriptor vectors.
#[inline]
pub fn distance_sq(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
