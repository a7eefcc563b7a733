//! Bag-of-visual-words concept detection and planar object detection.
//!
//! The concept pipeline is dense SURF-like sampling ([`durf`]) or DoG
//! keypoints ([`sift`]), an extremely-randomized-trees vocabulary
//! ([`codebook`]), and a histogram-intersection SVM ([`learning`]), scored by
//! average precision ([`eval`]). The object pipeline ([`matching`]) pools SIFT
//! descriptors of one or more reference views, matches frames through a
//! best-bin-first kd-tree and localizes the object with a RANSAC homography.
//!
//! Feature extractors are interchangeable strategies registered by name in an
//! [`extract::ExtractorRegistry`].

pub mod codebook;
pub mod descfile;
pub mod durf;
pub mod error;
pub mod eval;
pub mod extract;
pub mod features;
pub mod fixtures;
pub mod fsio;
pub mod image;
pub mod learning;
pub mod matching;
pub mod registry;
pub mod rng;
pub mod sift;

pub use error::{Error, Result};
pub use features::{Descriptor, Feature, Keypoint};
pub use image::{Image, IntegralImage};
