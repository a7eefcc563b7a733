//! Descriptor extractors behind a common interface: a sampling strategy plus
//! a patch descriptor, selected by name at runtime.

use std::sync::Arc;

use crate::durf::{extract_durf, SamplingConfig, DURF_DIM};
use crate::error::Result;
use crate::features::Feature;
use crate::image::Image;
use crate::registry::{Named, Registry};
use crate::sift::{extract_sift, SiftParams, SIFT_DIM};

pub trait DescriptorExtractor: Named + Send + Sync {
    /// Length of every descriptor this extractor emits.
    fn dim(&self) -> usize;

    /// Samples points and describes them. Deterministic for a given image.
    fn extract(&self, img: &Image) -> Result<Vec<Feature>>;
}

#[derive(Debug, Clone, Default)]
pub struct DurfExtractor {
    pub config: SamplingConfig,
}

impl Named for DurfExtractor {
    fn name(&self) -> &str {
        "durf"
    }
}

impl DescriptorExtractor for DurfExtractor {
    fn dim(&self) -> usize {
        DURF_DIM
    }

    fn extract(&self, img: &Image) -> Result<Vec<Feature>> {
        Ok(extract_durf(img, &self.config))
    }
}

#[derive(Debug, Clone, Default)]
pub struct SiftExtractor {
    pub params: SiftParams,
}

impl Named for SiftExtractor {
    fn name(&self) -> &str {
        "sift"
    }
}

impl DescriptorExtractor for SiftExtractor {
    fn dim(&self) -> usize {
        SIFT_DIM
    }

    fn extract(&self, img: &Image) -> Result<Vec<Feature>> {
        extract_sift(img, &self.params)
    }
}

pub type ExtractorRegistry = Registry<dyn DescriptorExtractor>;

/// Registry holding `durf` and `sift` with the given settings.
pub fn extractors(durf: SamplingConfig, sift: SiftParams) -> ExtractorRegistry {
    let mut reg = ExtractorRegistry::new();
    reg.register(Arc::new(DurfExtractor { config: durf }))
        .register(Arc::new(SiftExtractor { params: sift }));
    reg
}

/// Registry with default DURF (s = 2) and SIFT settings.
pub fn default_extractors() -> ExtractorRegistry {
    extractors(SamplingConfig::default(), SiftParams::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Error;

    #[test]
    fn default_registry_has_both_extractors() {
        let reg = default_extractors();
        assert_eq!(reg.names(), vec!["durf", "sift"]);
        assert_eq!(reg.get("durf").unwrap().dim(), 64);
        assert_eq!(reg.get("sift").unwrap().dim(), 128);
        assert!(matches!(reg.get("surf"), Err(Error::UnknownStrategy(_))));
    }

    #[test]
    fn extractors_report_their_dim() {
        let reg = default_extractors();
        let img = crate::fixtures::textured(96, 96, 1);
        for name in reg.names() {
            let ex = reg.get(name).unwrap();
            let feats = ex.extract(&img).unwrap();
            assert!(!feats.is_empty(), "{name}");
            assert!(feats.iter().all(|f| f.descriptor.dim() == ex.dim()));
        }
    }
}
