//! Two-variable decomposition for
//! `min ½ αᵀQα − Σα  s.t.  yᵀα = 0, 0 ≤ α_i ≤ C_{y_i}` with
//! `Q_ij = y_i y_j K_ij`.

use std::num::NonZeroUsize;

use lru::LruCache;
use nalgebra::DMatrix;

use super::kernel::{gram_unchecked, hik_unchecked};
use super::{SvmParams, TrainingSet};

/// Largest training set whose Gram matrix is precomputed.
pub(crate) const FULL_GRAM_LIMIT: usize = 4096;
const TAU: f64 = 1e-12;

pub(crate) struct Solution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub converged: bool,
}

trait KernelSource {
    fn row(&mut self, i: usize) -> &[f64];
}

struct FullGram(DMatrix<f64>);

impl KernelSource for FullGram {
    fn row(&mut self, i: usize) -> &[f64] {
        // Column-major storage of a symmetric matrix: column i is row i.
        let n = self.0.nrows();
        &self.0.as_slice()[i * n..(i + 1) * n]
    }
}

struct RowCache<'a> {
    histograms: &'a [Vec<f64>],
    rows: LruCache<usize, Vec<f64>>,
}

impl KernelSource for RowCache<'_> {
    fn row(&mut self, i: usize) -> &[f64] {
        let hs = self.histograms;
        self.rows
            .get_or_insert(i, || hs.iter().map(|h| hik_unchecked(&hs[i], h)).collect())
    }
}

pub(crate) fn solve(ts: &TrainingSet, c_pos: f64, c_neg: f64, p: &SvmParams) -> Solution {
    if ts.len() <= FULL_GRAM_LIMIT {
        let mut k = FullGram(gram_unchecked(ts.histograms(), ts.len()));
        run(&mut k, ts.labels(), c_pos, c_neg, p)
    } else {
        solve_with_cache(ts, c_pos, c_neg, p)
    }
}

pub(crate) fn solve_with_cache(ts: &TrainingSet, c_pos: f64, c_neg: f64, p: &SvmParams) -> Solution {
    let hs = ts.histograms();
    let mut k = RowCache {
        histograms: hs,
        rows: LruCache::new(NonZeroUsize::new(p.cache_rows.max(2)).unwrap()),
    };
    run(&mut k, ts.labels(), c_pos, c_neg, p)
}

fn run(k: &mut dyn KernelSource, y: &[f64], c_pos: f64, c_neg: f64, p: &SvmParams) -> Solution {
    let n = y.len();
    let cap: Vec<f64> = y.iter().map(|&l| if l > 0.0 { c_pos } else { c_neg }).collect();
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let in_up = |a: f64, y: f64, c: f64| (y > 0.0 && a < c) || (y < 0.0 && a > 0.0);
    let in_low = |a: f64, y: f64, c: f64| (y > 0.0 && a > 0.0) || (y < 0.0 && a < c);

    let max_iter = p.max_passes.saturating_mul(n).max(1);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        // Maximal violating pair on -y_t G_t, which equals y_t - f_t + b.
        let (mut i, mut gmax) = (usize::MAX, f64::NEG_INFINITY);
        let (mut j, mut gmin) = (usize::MAX, f64::INFINITY);
        for t in 0..n {
            let v = -y[t] * grad[t];
            if in_up(alpha[t], y[t], cap[t]) && v > gmax {
                (i, gmax) = (t, v);
            }
            if in_low(alpha[t], y[t], cap[t]) && v < gmin {
                (j, gmin) = (t, v);
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax - gmin < p.tol {
            converged = true;
            break;
        }
        iterations += 1;

        let qi: Vec<f64> = k.row(i).to_vec();
        let qj: &[f64] = k.row(j);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let (ci, cj) = (cap[i], cap[j]);
        let quad = (qi[i] + qj[j] - 2.0 * qi[j]).max(TAU);
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > ci - cj {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = ci - diff;
                }
            } else if alpha[j] > cj {
                alpha[j] = cj;
                alpha[i] = cj + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > ci {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = sum - ci;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > cj {
                if alpha[j] > cj {
                    alpha[j] = cj;
                    alpha[i] = sum - cj;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * qi[t] * di + y[j] * qj[t] * dj);
        }
    }

    Solution {
        bias: bias(&alpha, &grad, y, &cap),
        alpha,
        iterations,
        converged,
    }
}

/// Mean of `-y_t G_t` over free examples, or the midpoint of the feasible
/// interval when every multiplier sits at a bound.
fn bias(alpha: &[f64], grad: &[f64], y: &[f64], cap: &[f64]) -> f64 {
    let (mut sum, mut free) = (0.0, 0usize);
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    for t in 0..y.len() {
        let v = -y[t] * grad[t];
        if alpha[t] > 0.0 && alpha[t] < cap[t] {
            sum += v;
            free += 1;
        } else {
            let at_upper = alpha[t] >= cap[t];
            // Lower-bound examples of the positive class and upper-bound
            // examples of the negative class bound b from below.
            if (y[t] > 0.0) != at_upper {
                lb = lb.max(v);
            } else {
                ub = ub.min(v);
            }
        }
    }
    if free > 0 {
        sum / free as f64
    } else if lb.is_finite() && ub.is_finite() {
        0.5 * (lb + ub)
    } else if lb.is_finite() {
        lb
    } else {
        ub
    }
}
