//! Planar homographies: normalized DLT and seeded RANSAC.

use nalgebra::{DMatrix, Matrix3, Vector3};
use rand::seq::index;

use crate::error::{Error, Result};
use crate::rng::seeded;

/// A model point and the frame point it corresponds to.
pub type Correspondence = ([f64; 2], [f64; 2]);

const COLLINEAR_EPS: f64 = 1e-9;
const RANK_EPS: f64 = 1e-10;

/// 3×3 projective map scaled so `h[2][2] = 1`, or to unit Frobenius norm when
/// that entry vanishes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography(Matrix3<f64>);

impl Homography {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        let norm = m.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Degenerate("homography is zero or not finite".into()));
        }
        let unit = m / norm;
        if unit.determinant().abs() < 1e-12 {
            return Err(Error::Degenerate("homography is singular".into()));
        }
        Ok(Self(if unit[(2, 2)].abs() > 1e-12 {
            m / m[(2, 2)]
        } else {
            unit
        }))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// Maps a point; `None` when it lands on the line at infinity.
    pub fn apply(&self, p: [f64; 2]) -> Option<[f64; 2]> {
        let v = self.0 * Vector3::new(p[0], p[1], 1.0);
        (v.z.abs() > 1e-12).then(|| [v.x / v.z, v.y / v.z])
    }

    /// Distance from the mapped model point to the frame point.
    pub fn transfer_error(&self, c: &Correspondence) -> f64 {
        self.apply(c.0)
            .map_or(f64::INFINITY, |q| (q[0] - c.1[0]).hypot(q[1] - c.1[1]))
    }
}

/// Similarity taking the centroid to the origin and the mean distance to √2.
fn normalizer(points: impl Iterator<Item = [f64; 2]> + Clone) -> Result<Matrix3<f64>> {
    let n = points.clone().count() as f64;
    let (sx, sy) = points.clone().fold((0.0, 0.0), |a, p| (a.0 + p[0], a.1 + p[1]));
    let (cx, cy) = (sx / n, sy / n);
    let mean = points.map(|p| (p[0] - cx).hypot(p[1] - cy)).sum::<f64>() / n;
    if !(mean > 0.0) || !mean.is_finite() {
        return Err(Error::Degenerate("coincident points".into()));
    }
    let s = std::f64::consts::SQRT_2 / mean;
    Ok(Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0))
}

fn apply_raw(m: &Matrix3<f64>, p: [f64; 2]) -> [f64; 2] {
    let v = m * Vector3::new(p[0], p[1], 1.0);
    [v.x / v.z, v.y / v.z]
}

fn cross(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn has_collinear_triple(points: &[[f64; 2]]) -> bool {
    let n = points.len();
    (0..n).any(|i| {
        (i + 1..n).any(|j| (j + 1..n).any(|k| cross(points[i], points[j], points[k]).abs() < COLLINEAR_EPS))
    })
}

/// Least-squares homography from at least four correspondences.
pub fn dlt_homography(pairs: &[Correspondence]) -> Result<Homography> {
    if pairs.len() < 4 {
        return Err(Error::InvalidParameter(format!(
            "a homography needs 4 correspondences, got {}",
            pairs.len()
        )));
    }
    let tm = normalizer(pairs.iter().map(|c| c.0))?;
    let tf = normalizer(pairs.iter().map(|c| c.1))?;
    let m: Vec<[f64; 2]> = pairs.iter().map(|c| apply_raw(&tm, c.0)).collect();
    let f: Vec<[f64; 2]> = pairs.iter().map(|c| apply_raw(&tf, c.1)).collect();
    if pairs.len() == 4 && (has_collinear_triple(&m) || has_collinear_triple(&f)) {
        return Err(Error::Degenerate("three of four points are collinear".into()));
    }

    // Zero rows pad the minimal case so the decomposition yields all nine
    // right singular vectors.
    let rows = (2 * pairs.len()).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, (p, q)) in m.iter().zip(&f).enumerate() {
        let ([x, y], [u, v]) = (*p, *q);
        let r = 2 * i;
        for (c, val) in [-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u].into_iter().enumerate() {
            a[(r, c)] = val;
        }
        for (c, val) in [0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v].into_iter().enumerate() {
            a[(r + 1, c)] = val;
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Degenerate("decomposition failed".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let s = &svd.singular_values;
    if s[order[1]] <= RANK_EPS * s[order[order.len() - 1]] {
        return Err(Error::Degenerate("correspondences do not fix a homography".into()));
    }
    let h = v_t.row(order[0]);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let tf_inv = tf
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("normalization not invertible".into()))?;
    Homography::from_matrix(tf_inv * hn * tm)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacParams {
    pub inlier_px: f64,
    pub max_iters: usize,
    pub min_inliers: usize,
    /// Early-stop confidence for the sample-count bound.
    pub confidence: f64,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            inlier_px: 3.0,
            max_iters: 1000,
            min_inliers: 8,
            confidence: 0.999,
            seed: 0,
        }
    }
}

/// Rejects samples whose point order flips between the two views; no
/// homography that keeps the points in front of the camera does that.
fn orientation_consistent(pairs: &[Correspondence], sample: &[usize]) -> bool {
    const TRIPLES: [[usize; 3]; 4] = [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]];
    TRIPLES.iter().all(|t| {
        let [a, b, c] = t.map(|i| pairs[sample[i]]);
        let sm = cross(a.0, b.0, c.0);
        let sf = cross(a.1, b.1, c.1);
        sm * sf > 0.0
    })
}

fn inliers(h: &Homography, pairs: &[Correspondence], px: f64) -> Vec<usize> {
    (0..pairs.len())
        .filter(|&i| h.transfer_error(&pairs[i]) <= px)
        .collect()
}

/// Iterations needed to draw one all-inlier sample with the given confidence.
fn needed_iterations(inlier_ratio: f64, confidence: f64) -> f64 {
    let w4 = inlier_ratio.powi(4);
    if w4 >= 1.0 {
        0.0
    } else if w4 <= 0.0 {
        f64::INFINITY
    } else {
        (1.0 - confidence).ln() / (1.0 - w4).ln()
    }
}

/// Largest-consensus homography, refit on its inliers. `Ok(None)` when fewer
/// than four pairs are given or the best consensus is below `min_inliers`.
pub fn ransac_homography(
    pairs: &[Correspondence],
    p: &RansacParams,
) -> Result<Option<(Homography, Vec<usize>)>> {
    if !(p.inlier_px > 0.0) || !(0.0..1.0).contains(&p.confidence) {
        return Err(Error::InvalidParameter(
            "inlier_px must be positive and confidence in [0, 1)".into(),
        ));
    }
    if pairs.len() < 4 {
        return Ok(None);
    }
    let mut rng = seeded(p.seed);
    let mut best: Option<(Homography, Vec<usize>)> = None;
    let mut iter = 0;
    while iter < p.max_iters {
        iter += 1;
        let sample = index::sample(&mut rng, pairs.len(), 4).into_vec();
        if !orientation_consistent(pairs, &sample) {
            continue;
        }
        let subset: Vec<Correspondence> = sample.iter().map(|&i| pairs[i]).collect();
        let Ok(h) = dlt_homography(&subset) else {
            continue;
        };
        let inl = inliers(&h, pairs, p.inlier_px);
        if best.as_ref().is_none_or(|(_, b)| inl.len() > b.len()) {
            let ratio = inl.len() as f64 / pairs.len() as f64;
            best = Some((h, inl));
            if iter as f64 >= needed_iterations(ratio, p.confidence) {
                break;
            }
        }
    }
    let Some((mut h, mut inl)) = best else {
        return Ok(None);
    };
    // Refit while the consensus does not shrink.
    for _ in 0..5 {
        if inl.len() < 5 {
            break;
        }
        let subset: Vec<Correspondence> = inl.iter().map(|&i| pairs[i]).collect();
        let Ok(refit) = dlt_homography(&subset) else {
            break;
        };
        let next = inliers(&refit, pairs, p.inlier_px);
        if next.len() < inl.len() {
            break;
        }
        let same = next == inl;
        h = refit;
        inl = next;
        if same {
            break;
        }
    }
    Ok((inl.len() >= p.min_inliers).then_some((h, inl)))
}
