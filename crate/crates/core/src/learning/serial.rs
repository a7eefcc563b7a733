//! JSON model files. Support vectors are stored inline as sparse vectors, or
//! as indices into an OVCD histogram file kept next to the model.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::SvmModel;
use crate::descfile::read_histograms;
use crate::error::{Error, Result};
use crate::fsio::{read_bytes, write_atomic};

pub const MODEL_VERSION: u32 = 1;

/// Where a saved model keeps its support vectors.
#[derive(Debug, Clone, PartialEq)]
pub enum SvStorage {
    Inline,
    /// Training histogram file; relative paths resolve against the model's
    /// directory on load.
    Reference(PathBuf),
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    dim: usize,
    bias: f64,
    c_pos: f64,
    c_neg: f64,
    coefficients: Vec<f64>,
    sv_indices: Vec<usize>,
    support: Support,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "storage", rename_all = "lowercase")]
enum Support {
    Inline { vectors: Vec<SparseVec> },
    Reference { histograms: PathBuf },
}

#[derive(Serialize, Deserialize)]
struct SparseVec {
    indices: Vec<u32>,
    values: Vec<f64>,
}

pub fn model_to_json(model: &SvmModel, storage: &SvStorage) -> Result<Vec<u8>> {
    let support = match storage {
        SvStorage::Inline => Support::Inline {
            vectors: model
                .support_vectors
                .iter()
                .map(|sv| {
                    let (indices, values) = sv
                        .iter()
                        .enumerate()
                        .filter(|(_, v)| **v != 0.0)
                        .map(|(i, v)| (i as u32, *v))
                        .unzip();
                    SparseVec { indices, values }
                })
                .collect(),
        },
        SvStorage::Reference(p) => Support::Reference {
            histograms: p.clone(),
        },
    };
    let file = ModelFile {
        version: MODEL_VERSION,
        dim: model.dim,
        bias: model.bias,
        c_pos: model.c_pos,
        c_neg: model.c_neg,
        coefficients: model.coefficients.clone(),
        sv_indices: model.sv_indices.clone(),
        support,
    };
    Ok(serde_json::to_vec_pretty(&file)?)
}

/// Parses a model; `base_dir` resolves a relative histogram reference.
pub fn model_from_json(bytes: &[u8], base_dir: &Path) -> Result<SvmModel> {
    #[derive(Deserialize)]
    struct Version {
        version: u32,
    }
    let v: Version = serde_json::from_slice(bytes)?;
    if v.version != MODEL_VERSION {
        return Err(Error::VersionMismatch {
            expected: MODEL_VERSION,
            found: v.version,
        });
    }
    let file: ModelFile = serde_json::from_slice(bytes)?;
    let n = file.coefficients.len();
    if n == 0 || file.sv_indices.len() != n {
        return Err(Error::Malformed(
            "model needs one index per coefficient and at least one support vector".into(),
        ));
    }
    let support_vectors = match file.support {
        Support::Inline { vectors } => {
            if vectors.len() != n {
                return Err(Error::Malformed(format!(
                    "{} coefficients but {} support vectors",
                    n,
                    vectors.len()
                )));
            }
            vectors
                .into_iter()
                .map(|sv| {
                    if sv.indices.len() != sv.values.len() {
                        return Err(Error::Malformed("sparse vector length mismatch".into()));
                    }
                    let mut dense = vec![0.0; file.dim];
                    for (i, v) in sv.indices.into_iter().zip(sv.values) {
                        *dense.get_mut(i as usize).ok_or_else(|| {
                            Error::Malformed(format!("index {i} outside dim {}", file.dim))
                        })? = v;
                    }
                    Ok(dense)
                })
                .collect::<Result<Vec<_>>>()?
        }
        Support::Reference { histograms } => {
            let path = base_dir.join(histograms);
            let (dim, hs) = read_histograms(&path)?;
            if dim != file.dim {
                return Err(Error::DimensionMismatch {
                    expected: file.dim,
                    actual: dim,
                });
            }
            file.sv_indices
                .iter()
                .map(|&i| {
                    hs.get(i).cloned().ok_or_else(|| {
                        Error::Malformed(format!("support vector index {i} outside histogram file"))
                    })
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    Ok(SvmModel {
        support_vectors,
        coefficients: file.coefficients,
        sv_indices: file.sv_indices,
        bias: file.bias,
        c_pos: file.c_pos,
        c_neg: file.c_neg,
        dim: file.dim,
        iterations: 0,
        converged: true,
    })
}

pub fn save_model(path: impl AsRef<Path>, model: &SvmModel, storage: &SvStorage) -> Result<()> {
    write_atomic(path, &model_to_json(model, storage)?)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<SvmModel> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    model_from_json(&read_bytes(path)?, base)
}
