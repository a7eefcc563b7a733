//! OVCD binary files. Little-endian layout:
//!
//! ```text
//! magic "OVCD" | version u32 | dim u32 | count u64
//! ```
//!
//! Descriptor files follow the header with `count` records of
//! `x, y, scale, orientation` (f32 each) and `dim` f32 values. Histogram
//! files use the same header with `count` records of `dim` f32 values only.
//! Readers check the exact payload length, so one kind cannot be misread as
//! the other.

use std::path::Path;

use crate::error::{Error, Result};
use crate::features::{Descriptor, Feature, Keypoint};
use crate::fsio::{read_bytes, write_atomic};

pub const MAGIC: &[u8; 4] = b"OVCD";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 8;

fn header(dim: usize, count: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    out.extend_from_slice(&(count as u64).to_le_bytes());
    out
}

fn parse_header(bytes: &[u8]) -> Result<(usize, usize)> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Malformed("OVCD header truncated".into()));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Malformed("missing OVCD magic".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::VersionMismatch {
            expected: VERSION,
            found: version,
        });
    }
    let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let count = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    Ok((dim, count))
}

fn check_len(bytes: &[u8], count: usize, record: usize) -> Result<()> {
    let expected = count
        .checked_mul(record)
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::Malformed("record count overflows".into()))?;
    if bytes.len() != expected {
        return Err(Error::Malformed(format!(
            "expected {expected} bytes for {count} records, found {}",
            bytes.len()
        )));
    }
    Ok(())
}

fn f32s(chunk: &[u8]) -> impl Iterator<Item = f32> + '_ {
    chunk
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
}

/// Serializes features of one dimension. `dim` is taken from the features,
/// or from `dim` when the list is empty.
pub fn encode_features(features: &[Feature], dim: usize) -> Result<Vec<u8>> {
    let mut out = header(dim, features.len());
    out.reserve(features.len() * (16 + 4 * dim));
    for f in features {
        if f.descriptor.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: f.descriptor.dim(),
            });
        }
        let k = &f.keypoint;
        for v in [k.x, k.y, k.scale, k.orientation] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        for v in f.descriptor.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_features(bytes: &[u8]) -> Result<(usize, Vec<Feature>)> {
    let (dim, count) = parse_header(bytes)?;
    let record = 4 * (4 + dim);
    check_len(bytes, count, record)?;
    let features = bytes[HEADER_LEN..]
        .chunks_exact(record)
        .map(|rec| {
            let head: Vec<f32> = f32s(&rec[..16]).collect();
            Feature {
                keypoint: Keypoint {
                    x: head[0] as f64,
                    y: head[1] as f64,
                    scale: head[2] as f64,
                    orientation: head[3] as f64,
                    response: 0.0,
                },
                descriptor: Descriptor::new(f32s(&rec[16..]).collect()),
            }
        })
        .collect();
    Ok((dim, features))
}

pub fn write_features(path: impl AsRef<Path>, features: &[Feature], dim: usize) -> Result<()> {
    write_atomic(path, &encode_features(features, dim)?)
}

pub fn read_features(path: impl AsRef<Path>) -> Result<(usize, Vec<Feature>)> {
    decode_features(&read_bytes(path)?)
}

pub fn encode_histograms(histograms: &[Vec<f64>], dim: usize) -> Result<Vec<u8>> {
    let mut out = header(dim, histograms.len());
    out.reserve(histograms.len() * 4 * dim);
    for h in histograms {
        if h.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: h.len(),
            });
        }
        for &v in h {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_histograms(bytes: &[u8]) -> Result<(usize, Vec<Vec<f64>>)> {
    let (dim, count) = parse_header(bytes)?;
    check_len(bytes, count, 4 * dim)?;
    if dim == 0 {
        return Ok((0, vec![Vec::new(); count]));
    }
    let hs = bytes[HEADER_LEN..]
        .chunks_exact(4 * dim)
        .map(|rec| f32s(rec).map(f64::from).collect())
        .collect();
    Ok((dim, hs))
}

pub fn write_histograms(path: impl AsRef<Path>, histograms: &[Vec<f64>], dim: usize) -> Result<()> {
    write_atomic(path, &encode_histograms(histograms, dim)?)
}

pub fn read_histograms(path: impl AsRef<Path>) -> Result<(usize, Vec<Vec<f64>>)> {
    decode_histograms(&read_bytes(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn feature(x: f32, vals: Vec<f32>) -> Feature {
        Feature {
            keypoint: Keypoint {
                x: x as f64,
                y: 2.0,
                scale: 1.5,
                orientation: 0.25,
                response: 0.0,
            },
            descriptor: Descriptor::new(vals),
        }
    }

    #[test]
    fn header_layout_is_fixed() {
        let bytes = encode_features(&[feature(1.0, vec![0.5; 3])], 3).unwrap();
        assert_eq!(&bytes[..4], b"OVCD");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &3u32.to_le_bytes());
        assert_eq!(&bytes[12..20], &1u64.to_le_bytes());
        assert_eq!(&bytes[20..24], &1.0f32.to_le_bytes());
        assert_eq!(bytes.len(), 20 + 4 * 4 + 3 * 4);
    }

    #[test]
    fn rejects_truncation_version_and_kind_confusion() {
        let bytes = encode_features(&[feature(1.0, vec![0.5; 4])], 4).unwrap();
        assert!(decode_features(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(
            decode_features(&bad),
            Err(Error::VersionMismatch { found: 9, .. })
        ));
        assert!(decode_histograms(&bytes).is_err());
        assert!(encode_features(&[feature(1.0, vec![0.5; 4])], 5).is_err());
    }

    #[test]
    fn empty_files_keep_dim() {
        let bytes = encode_features(&[], 128).unwrap();
        let (dim, fs) = decode_features(&bytes).unwrap();
        assert_eq!((dim, fs.len()), (128, 0));
    }

    proptest! {
        #[test]
        fn feature_round_trip(vals in proptest::collection::vec(-1.0f32..1.0, 1..20), n in 0usize..5) {
            let dim = vals.len();
            let features: Vec<Feature> = (0..n).map(|i| feature(i as f32, vals.clone())).collect();
            let (d, back) = decode_features(&encode_features(&features, dim).unwrap()).unwrap();
            prop_assert_eq!(d, dim);
            prop_assert_eq!(back, features);
        }

        #[test]
        fn histogram_round_trip(h in proptest::collection::vec(0.0f64..1.0, 1..50)) {
            let h: Vec<f64> = h.into_iter().map(|v| v as f32 as f64).collect();
            let (d, back) = decode_histograms(&encode_histograms(&[h.clone(), h.clone()], h.len()).unwrap()).unwrap();
            prop_assert_eq!(d, h.len());
            prop_assert_eq!(back, vec![h.clone(), h]);
        }
    }
}
