use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Histogram intersection `Σ min(x_i, z_i)`.
pub fn hik(x: &[f64], z: &[f64]) -> Result<f64> {
    if x.len() != z.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: z.len(),
        });
    }
    if x.iter().chain(z).any(|v| !(*v >= 0.0)) {
        return Err(Error::InvalidParameter(
            "intersection kernel needs non-negative entries".into(),
        ));
    }
    Ok(hik_unchecked(x, z))
}

#[inline]
pub(crate) fn hik_unchecked(x: &[f64], z: &[f64]) -> f64 {
    x.iter().zip(z).map(|(a, b)| a.min(*b)).sum()
}

/// Symmetric Gram matrix; each off-diagonal pair is evaluated once.
pub fn gram(histograms: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = histograms.len();
    if let Some(first) = histograms.first() {
        for h in histograms {
            hik(first, h)?;
        }
    }
    Ok(gram_unchecked(histograms, n))
}

pub(crate) fn gram_unchecked(histograms: &[Vec<f64>], n: usize) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = hik_unchecked(&histograms[i], &histograms[j]);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    g
}
