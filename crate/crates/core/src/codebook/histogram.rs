//! Bag-of-words histograms.

use super::Vocabulary;
use crate::error::{Error, Result};
use crate::features::Descriptor;

/// L1-normalized word counts, or all zeros for an image without descriptors.
#[derive(Debug, Clone, PartialEq)]
pub struct BowHistogram {
    counts: Vec<f64>,
}

impl BowHistogram {
    pub fn zeros(len: usize) -> Self {
        Self {
            counts: vec![0.0; len],
        }
    }

    /// Wraps `values` after checking they are finite and non-negative.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "histogram entry {v} is not a non-negative number"
            )));
        }
        Ok(Self { counts: values })
    }

    /// Normalizes raw counts to unit L1 mass; all-zero input stays zero.
    pub fn from_counts(counts: Vec<f64>) -> Result<Self> {
        let mut h = Self::from_values(counts)?;
        let total: f64 = h.counts.iter().sum();
        if total > 0.0 {
            h.counts.iter_mut().for_each(|c| *c /= total);
        }
        Ok(h)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.counts
    }

    pub fn into_values(self) -> Vec<f64> {
        self.counts
    }

    pub fn l1(&self) -> f64 {
        self.counts.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.counts.iter().all(|&c| c == 0.0)
    }
}

/// Unnormalized word counts: every descriptor adds one count per tree.
pub fn word_counts(vocab: &dyn Vocabulary, descs: &[Descriptor]) -> Result<Vec<f64>> {
    let mut counts = vec![0.0; vocab.size()];
    for d in descs {
        for w in vocab.assign(d.values())? {
            counts[w] += 1.0;
        }
    }
    Ok(counts)
}

pub fn encode(vocab: &dyn Vocabulary, descs: &[Descriptor]) -> Result<BowHistogram> {
    BowHistogram::from_counts(word_counts(vocab, descs)?)
}

/// Concatenates `0.5·a` and `0.5·b`.
pub fn fuse(a: &BowHistogram, b: &BowHistogram) -> BowHistogram {
    BowHistogram {
        counts: a
            .counts
            .iter()
            .chain(&b.counts)
            .map(|&c| 0.5 * c)
            .collect(),
    }
}
