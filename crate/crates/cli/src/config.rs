//! Run configuration. A TOML file may set any field; command-line flags
//! override it and defaults fill the rest.

use std::path::Path;

use clap::ValueEnum;
use serde::Deserialize;
use vcd_core::codebook::ErtParams;
use vcd_core::durf::SamplingConfig;
use vcd_core::eval::ApVariant;
use vcd_core::learning::SvmParams;
use vcd_core::matching::{DetectParams, RansacParams};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Durf,
    Sift,
    Fused,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Durf => "durf",
            Method::Sift => "sift",
            Method::Fused => "fused",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, ValueEnum)]
pub enum Variant {
    #[serde(rename = "plain")]
    Plain,
    #[serde(rename = "11-point")]
    #[value(name = "11-point")]
    ElevenPoint,
}

impl From<Variant> for ApVariant {
    fn from(v: Variant) -> Self {
        match v {
            Variant::Plain => ApVariant::Plain,
            Variant::ElevenPoint => ApVariant::ElevenPoint,
        }
    }
}

/// Every tunable, all optional. Used both for the file and for flags.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub method: Option<Method>,
    pub scale: Option<usize>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub n_trees: Option<usize>,
    pub max_depth: Option<usize>,
    pub per_image: Option<usize>,
    pub c: Option<f64>,
    pub tol: Option<f64>,
    pub class_weighting: Option<bool>,
    pub ratio: Option<f64>,
    pub inlier_px: Option<f64>,
    pub min_inliers: Option<usize>,
    pub max_checks: Option<usize>,
    pub ap_variant: Option<Variant>,
}

macro_rules! overlay {
    ($base:expr, $top:expr, $($f:ident),*) => {
        Config { $($f: $top.$f.or($base.$f)),* }
    };
}

impl Config {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    /// `top` wins wherever it sets a field.
    pub fn overlay(&self, top: &Config) -> Config {
        overlay!(
            self, top, method, scale, seed, jobs, n_trees, max_depth, per_image, c, tol,
            class_weighting, ratio, inlier_px, min_inliers, max_checks, ap_variant
        )
    }

    pub fn resolve(&self) -> CliResult<Settings> {
        let d = Settings::default();
        let s = Settings {
            method: self.method.unwrap_or(d.method),
            scale: self.scale.unwrap_or(d.scale),
            seed: self.seed.unwrap_or(d.seed),
            jobs: self.jobs,
            n_trees: self.n_trees.unwrap_or(d.n_trees),
            max_depth: self.max_depth.unwrap_or(d.max_depth),
            per_image: self.per_image.unwrap_or(d.per_image),
            c: self.c.unwrap_or(d.c),
            tol: self.tol.unwrap_or(d.tol),
            class_weighting: self.class_weighting.unwrap_or(d.class_weighting),
            ratio: self.ratio.unwrap_or(d.ratio),
            inlier_px: self.inlier_px.unwrap_or(d.inlier_px),
            min_inliers: self.min_inliers.unwrap_or(d.min_inliers),
            max_checks: self.max_checks.unwrap_or(d.max_checks),
            ap_variant: self.ap_variant.unwrap_or(d.ap_variant),
        };
        s.validate()?;
        Ok(s)
    }
}

/// Resolved, validated parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub method: Method,
    pub scale: usize,
    pub seed: u64,
    pub jobs: Option<usize>,
    pub n_trees: usize,
    pub max_depth: usize,
    pub per_image: usize,
    pub c: f64,
    pub tol: f64,
    pub class_weighting: bool,
    pub ratio: f64,
    pub inlier_px: f64,
    pub min_inliers: usize,
    pub max_checks: usize,
    pub ap_variant: Variant,
}

impl Default for Settings {
    fn default() -> Self {
        let ert = ErtParams::default();
        let svm = SvmParams::default();
        let det = DetectParams::default();
        Self {
            method: Method::Durf,
            scale: SamplingConfig::default().scale(),
            seed: 0,
            jobs: None,
            n_trees: ert.n_trees,
            max_depth: ert.max_depth,
            per_image: 100,
            c: svm.c,
            tol: svm.tol,
            class_weighting: svm.class_weighting,
            ratio: det.ratio,
            inlier_px: det.ransac.inlier_px,
            min_inliers: det.ransac.min_inliers,
            max_checks: det.max_checks,
            ap_variant: Variant::Plain,
        }
    }
}

impl Settings {
    fn validate(&self) -> CliResult<()> {
        self.sampling()?;
        self.ert().validate()?;
        self.svm().validate()?;
        let bad = |m: &str| Err(CliError::Usage(m.into()));
        if self.per_image == 0 {
            return bad("per_image must be >= 1");
        }
        if self.jobs == Some(0) {
            return bad("jobs must be >= 1");
        }
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return bad("ratio must be in (0, 1]");
        }
        if !(self.inlier_px > 0.0 && self.inlier_px.is_finite()) {
            return bad("inlier_px must be positive");
        }
        if self.min_inliers < 4 {
            return bad("min_inliers must be >= 4");
        }
        if self.max_checks == 0 {
            return bad("max_checks must be >= 1");
        }
        Ok(())
    }

    pub fn sampling(&self) -> CliResult<SamplingConfig> {
        Ok(SamplingConfig::new(self.scale)?)
    }

    pub fn ert(&self) -> ErtParams {
        ErtParams {
            n_trees: self.n_trees,
            max_depth: self.max_depth,
            seed: self.seed,
            ..ErtParams::default()
        }
    }

    pub fn svm(&self) -> SvmParams {
        SvmParams {
            c: self.c,
            tol: self.tol,
            class_weighting: self.class_weighting,
            ..SvmParams::default()
        }
    }

    pub fn detect(&self) -> DetectParams {
        let d = DetectParams::default();
        DetectParams {
            ratio: self.ratio,
            max_checks: self.max_checks,
            ransac: RansacParams {
                inlier_px: self.inlier_px,
                min_inliers: self.min_inliers,
                seed: self.seed,
                ..d.ransac
            },
            ..d
        }
    }
}
