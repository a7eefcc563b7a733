//! Histogram-intersection-kernel SVM.
//!
//! Training solves the soft-margin dual by two-variable decomposition,
//! selecting the maximal violating pair at every step. Positive and negative
//! examples may carry different costs so heavily imbalanced concept sets do
//! not collapse to the majority class.

mod kernel;
mod serial;
mod smo;

pub use kernel::{gram, hik};
pub use serial::{load_model, model_from_json, model_to_json, save_model, SvStorage, MODEL_VERSION};

use crate::error::{Error, Result};

/// Coefficients at or below this magnitude do not make a support vector.
pub const SV_EPS: f64 = 1e-8;

/// Histograms with ±1 labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    histograms: Vec<Vec<f64>>,
    labels: Vec<f64>,
}

impl TrainingSet {
    /// `labels[i]` is `true` for a positive example.
    pub fn new(histograms: Vec<Vec<f64>>, labels: Vec<bool>) -> Result<Self> {
        if histograms.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: histograms.len(),
                actual: labels.len(),
            });
        }
        let n_pos = labels.iter().filter(|&&l| l).count();
        if n_pos == 0 || n_pos == labels.len() {
            return Err(Error::Degenerate(
                "training needs at least one positive and one negative example".into(),
            ));
        }
        let dim = histograms[0].len();
        for h in &histograms {
            if h.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: h.len(),
                });
            }
            if h.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::InvalidParameter(
                    "histogram entries must be non-negative".into(),
                ));
            }
        }
        Ok(Self {
            histograms,
            labels: labels.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.histograms[0].len()
    }

    pub fn histograms(&self) -> &[Vec<f64>] {
        &self.histograms
    }

    /// Labels as `+1.0` / `-1.0`.
    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn n_positive(&self) -> usize {
        self.labels.iter().filter(|&&y| y > 0.0).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmParams {
    pub c: f64,
    pub tol: f64,
    /// Iteration budget in multiples of the training-set size.
    pub max_passes: usize,
    /// Scale the positive cost by `n_neg / n_pos`.
    pub class_weighting: bool,
    /// Kernel rows kept when the Gram matrix is too large to precompute.
    pub cache_rows: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            tol: 1e-3,
            max_passes: 100,
            class_weighting: true,
            cache_rows: 1024,
        }
    }
}

impl SvmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) || !(self.tol > 0.0) {
            return Err(Error::InvalidParameter("C and tol must be positive".into()));
        }
        if self.max_passes == 0 || self.cache_rows < 2 {
            return Err(Error::InvalidParameter(
                "max_passes must be >= 1 and cache_rows >= 2".into(),
            ));
        }
        Ok(())
    }

    /// `(C_pos, C_neg)` for a training set.
    pub fn costs(&self, ts: &TrainingSet) -> (f64, f64) {
        let n_pos = ts.n_positive() as f64;
        let n_neg = ts.len() as f64 - n_pos;
        if self.class_weighting {
            (self.c * n_neg / n_pos, self.c)
        } else {
            (self.c, self.c)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub(crate) support_vectors: Vec<Vec<f64>>,
    /// `alpha_i * y_i` per support vector.
    pub(crate) coefficients: Vec<f64>,
    /// Position of each support vector in the training set.
    pub(crate) sv_indices: Vec<usize>,
    pub(crate) bias: f64,
    pub(crate) c_pos: f64,
    pub(crate) c_neg: f64,
    pub(crate) dim: usize,
    pub(crate) iterations: usize,
    pub(crate) converged: bool,
}

impl SvmModel {
    pub fn support_vectors(&self) -> &[Vec<f64>] {
        &self.support_vectors
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn sv_indices(&self) -> &[usize] {
        &self.sv_indices
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn costs(&self) -> (f64, f64) {
        (self.c_pos, self.c_neg)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Solver iterations spent; zero for a loaded model.
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Whether training stopped on the KKT tolerance rather than the
    /// iteration budget.
    pub fn converged(&self) -> bool {
        self.converged
    }

    /// `Σ coef_i · hik(sv_i, h) + b`.
    pub fn decision(&self, h: &[f64]) -> Result<f64> {
        if h.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: h.len(),
            });
        }
        Ok(self
            .support_vectors
            .iter()
            .zip(&self.coefficients)
            .map(|(sv, c)| c * kernel::hik_unchecked(sv, h))
            .sum::<f64>()
            + self.bias)
    }
}

pub fn train_svm(ts: &TrainingSet, params: &SvmParams) -> Result<SvmModel> {
    params.validate()?;
    let (c_pos, c_neg) = params.costs(ts);
    let sol = smo::solve(ts, c_pos, c_neg, params);
    let mut model = SvmModel {
        support_vectors: Vec::new(),
        coefficients: Vec::new(),
        sv_indices: Vec::new(),
        bias: sol.bias,
        c_pos,
        c_neg,
        dim: ts.dim(),
        iterations: sol.iterations,
        converged: sol.converged,
    };
    for (i, &a) in sol.alpha.iter().enumerate() {
        if a > SV_EPS {
            model.support_vectors.push(ts.histograms[i].clone());
            model.coefficients.push(a * ts.labels[i]);
            model.sv_indices.push(i);
        }
    }
    if model.sv_indices.is_empty() {
        return Err(Error::Degenerate("solver produced no support vectors".into()));
    }
    Ok(model)
}

/// Per-example KKT violation of a trained model on its own training set:
/// `max(0, 1 - y f)` at `alpha = 0`, `max(0, y f - 1)` at the upper bound and
/// `|y f - 1|` in between.
pub fn kkt_residuals(model: &SvmModel, ts: &TrainingSet) -> Result<Vec<f64>> {
    let mut alpha = vec![0.0; ts.len()];
    for (&i, &c) in model.sv_indices.iter().zip(&model.coefficients) {
        let slot = alpha.get_mut(i).ok_or_else(|| {
            Error::DimensionMismatch {
                expected: ts.len(),
                actual: i + 1,
            }
        })?;
        *slot = c.abs();
    }
    ts.histograms
        .iter()
        .zip(&ts.labels)
        .zip(&alpha)
        .map(|((h, &y), &a)| {
            let margin = y * model.decision(h)?;
            let cap = if y > 0.0 { model.c_pos } else { model.c_neg };
            Ok(if a <= SV_EPS {
                (1.0 - margin).max(0.0)
            } else if a >= cap - SV_EPS {
                (margin - 1.0).max(0.0)
            } else {
                (margin - 1.0).abs()
            })
        })
        .collect()
}
