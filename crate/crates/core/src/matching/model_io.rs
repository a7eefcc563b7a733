//! Object model directories: `object.json` plus one OVCD feature file per
//! view (`view_<i>.ovcd`).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ObjectModel, View};
use crate::descfile::{read_features, write_features};
use crate::error::{Error, Result};
use crate::fsio::{read_bytes, write_atomic};
use crate::sift::SIFT_DIM;

pub const MODEL_FILE: &str = "object.json";
const OBJECT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ObjectFile {
    version: u32,
    name: String,
    views: Vec<ViewRecord>,
}

#[derive(Serialize, Deserialize)]
struct ViewRecord {
    width: usize,
    height: usize,
    features: String,
    n_features: usize,
}

/// Writes the model into `dir`, creating it if needed. Feature files are
/// written before the index so a partial save never yields a loadable model
/// that references missing views.
pub fn save_object_model(dir: impl AsRef<Path>, model: &ObjectModel) -> Result<()> {
    let dir = dir.as_ref();
    model.validate()?;
    fs::create_dir_all(dir)?;
    let mut views = Vec::with_capacity(model.views.len());
    for (i, v) in model.views.iter().enumerate() {
        let file = format!("view_{i}.ovcd");
        write_features(dir.join(&file), &v.features, SIFT_DIM)?;
        views.push(ViewRecord {
            width: v.width,
            height: v.height,
            features: file,
            n_features: v.features.len(),
        });
    }
    let index = ObjectFile {
        version: OBJECT_VERSION,
        name: model.name.clone(),
        views,
    };
    write_atomic(dir.join(MODEL_FILE), &serde_json::to_vec_pretty(&index)?)
}

pub fn load_object_model(dir: impl AsRef<Path>) -> Result<ObjectModel> {
    let dir = dir.as_ref();
    let file: ObjectFile = serde_json::from_slice(&read_bytes(dir.join(MODEL_FILE))?)?;
    if file.version != OBJECT_VERSION {
        return Err(Error::VersionMismatch {
            expected: OBJECT_VERSION,
            found: file.version,
        });
    }
    let mut views = Vec::with_capacity(file.views.len());
    for r in file.views {
        if Path::new(&r.features).components().count() != 1 {
            return Err(Error::Malformed(format!("view file '{}' must be a plain name", r.features)));
        }
        let (dim, features) = read_features(dir.join(&r.features))?;
        if dim != SIFT_DIM {
            return Err(Error::DimensionMismatch {
                expected: SIFT_DIM,
                actual: dim,
            });
        }
        if features.len() != r.n_features {
            return Err(Error::Malformed(format!(
                "{} holds {} features, index says {}",
                r.features,
                features.len(),
                r.n_features
            )));
        }
        views.push(View {
            width: r.width,
            height: r.height,
            features,
        });
    }
    let model = ObjectModel {
        name: file.name,
        views,
    };
    model.validate()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::textured;
    use crate::sift::SiftParams;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = SiftParams::default();
        let mut m = ObjectModel::learn("box", &textured(96, 96, 4), &p).unwrap();
        m.add_view(&textured(80, 112, 5), &p).unwrap();
        save_object_model(dir.path(), &m).unwrap();
        let loaded = load_object_model(dir.path()).unwrap();
        // Keypoint geometry is stored as f32 and responses are dropped.
        let mut expected = m.clone();
        for v in &mut expected.views {
            let bytes = crate::descfile::encode_features(&v.features, SIFT_DIM).unwrap();
            v.features = crate::descfile::decode_features(&bytes).unwrap().1;
        }
        assert_eq!(loaded, expected);
        save_object_model(dir.path(), &loaded).unwrap();
        assert_eq!(load_object_model(dir.path()).unwrap(), loaded);
    }

    #[test]
    fn missing_view_file_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let m = ObjectModel::learn("box", &textured(96, 96, 4), &SiftParams::default()).unwrap();
        save_object_model(dir.path(), &m).unwrap();
        fs::remove_file(dir.path().join("view_0.ovcd")).unwrap();
        assert!(matches!(load_object_model(dir.path()), Err(Error::MissingFile(_))));
        assert!(matches!(
            load_object_model(dir.path().join("nope")),
            Err(Error::MissingFile(_))
        ));
    }

    #[test]
    fn wrong_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let m = ObjectModel::learn("box", &textured(96, 96, 4), &SiftParams::default()).unwrap();
        save_object_model(dir.path(), &m).unwrap();
        let path = dir.path().join(MODEL_FILE);
        let text = fs::read_to_string(&path).unwrap().replace("\"version\": 1", "\"version\": 7");
        fs::write(&path, text).unwrap();
        assert!(matches!(
            load_object_model(dir.path()),
            Err(Error::VersionMismatch { found: 7, .. })
        ));
    }
}
