//! Planar object learning and detection from SIFT correspondences.
//!
//! Every learned view adds its descriptors to one pooled index. Frame
//! descriptors are matched against the pool with a ratio test whose
//! competitor comes from the best match's own view, so repeated views of the
//! same object do not cancel each other out. Each view's correspondences are
//! fit by RANSAC separately, since views do not share a coordinate system. The view with the largest plausible consensus
//! wins and its reference rectangle is mapped into the frame.

mod homography;
mod kdtree;
mod model_io;

pub use homography::{
    dlt_homography, ransac_homography, Correspondence, Homography, RansacParams,
};
pub use kdtree::{KdTree, Neighbor};
pub use model_io::{load_object_model, save_object_model, MODEL_FILE};

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::features::Feature;
use crate::image::Image;
use crate::sift::{extract_sift, SiftParams, MIN_INPUT_SIDE, SIFT_DIM};

/// Keypoints this close to the best match cannot serve as its second-best
/// competitor.
const SELF_EXCLUSION_PX: f64 = 2.0;
/// Neighbours fetched per query and per view to find a valid second-best.
const NEIGHBOURS: usize = 8;
/// Smallest detected quadrilateral area accepted, in square pixels.
const MIN_QUAD_AREA: f64 = 100.0;

/// One learned reference image.
#[derive(Debug, Clone, PartialEq)]
pub struct View {
    pub width: usize,
    pub height: usize,
    pub features: Vec<Feature>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectModel {
    pub name: String,
    pub views: Vec<View>,
}

impl ObjectModel {
    /// A one-view model of `img`.
    pub fn learn(name: impl Into<String>, img: &Image, sift: &SiftParams) -> Result<Self> {
        let mut m = Self {
            name: name.into(),
            views: Vec::new(),
        };
        m.add_view(img, sift)?;
        Ok(m)
    }

    /// Appends a view; fails without modifying the model when `img` yields no
    /// keypoints.
    pub fn add_view(&mut self, img: &Image, sift: &SiftParams) -> Result<()> {
        let features = extract_sift(img, sift)?;
        if features.is_empty() {
            return Err(Error::NoKeypoints);
        }
        self.views.push(View {
            width: img.width(),
            height: img.height(),
            features,
        });
        Ok(())
    }

    pub fn n_features(&self) -> usize {
        self.views.iter().map(|v| v.features.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.views.is_empty() {
            return Err(Error::Malformed("object model has no views".into()));
        }
        for (i, v) in self.views.iter().enumerate() {
            for f in &v.features {
                if f.descriptor.dim() != SIFT_DIM {
                    return Err(Error::DimensionMismatch {
                        expected: SIFT_DIM,
                        actual: f.descriptor.dim(),
                    });
                }
                let k = &f.keypoint;
                if !(k.x >= 0.0 && k.y >= 0.0 && k.x <= v.width as f64 && k.y <= v.height as f64) {
                    return Err(Error::Malformed(format!(
                        "view {i} keypoint ({}, {}) outside {}x{}",
                        k.x, k.y, v.width, v.height
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Creates a model from `img`, or adds `img` as a new view of `model`.
pub fn learn_object(img: &Image, model: Option<ObjectModel>, sift: &SiftParams) -> Result<ObjectModel> {
    match model {
        Some(mut m) => {
            m.add_view(img, sift)?;
            Ok(m)
        }
        None => ObjectModel::learn("object", img, sift),
    }
}

/// A frame-to-model correspondence that passed the ratio test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchPair {
    pub model_point: [f64; 2],
    pub frame_point: [f64; 2],
    pub distance: f64,
    /// Best over second-best distance.
    pub ratio: f64,
    pub view: usize,
    pub model_feature: usize,
}

impl MatchPair {
    pub fn correspondence(&self) -> Correspondence {
        (self.model_point, self.frame_point)
    }
}

/// Pooled kd-tree over every view's descriptors.
#[derive(Debug, Clone)]
pub struct MatchIndex {
    tree: KdTree,
    owners: Vec<(usize, usize)>,
    points: Vec<[f64; 2]>,
    n_views: usize,
}

impl MatchIndex {
    pub fn build(model: &ObjectModel) -> Result<Self> {
        let mut data = Vec::with_capacity(model.n_features() * SIFT_DIM);
        let mut owners = Vec::new();
        let mut points = Vec::new();
        for (v, view) in model.views.iter().enumerate() {
            for (i, f) in view.features.iter().enumerate() {
                if f.descriptor.dim() != SIFT_DIM {
                    return Err(Error::DimensionMismatch {
                        expected: SIFT_DIM,
                        actual: f.descriptor.dim(),
                    });
                }
                data.extend_from_slice(f.descriptor.values());
                owners.push((v, i));
                points.push([f.keypoint.x, f.keypoint.y]);
            }
        }
        Ok(Self {
            tree: KdTree::new(SIFT_DIM, data)?,
            owners,
            points,
            n_views: model.views.len(),
        })
    }

    pub fn len(&self) -> usize {
        self.owners.len()
    }

    pub fn is_empty(&self) -> bool {
        self.owners.is_empty()
    }

    pub fn tree(&self) -> &KdTree {
        &self.tree
    }

    /// Ratio-test matches of `frame` features. The competitor is the nearest
    /// keypoint of the best match's view lying over 2 px away from it; a
    /// match without one among the neighbours searched has ratio 0.
    pub fn match_features(&self, frame: &[Feature], ratio: f64, max_checks: usize) -> Result<Vec<MatchPair>> {
        let mut out = Vec::new();
        if !(ratio > 0.0) || self.is_empty() {
            return Ok(out);
        }
        let k = NEIGHBOURS * self.n_views.max(1);
        for f in frame {
            let nn = self.tree.search(f.descriptor.values(), k, max_checks)?;
            let Some(best) = nn.first() else { continue };
            let (bv, _) = self.owners[best.index];
            let bp = self.points[best.index];
            let second = nn[1..].iter().find(|n| {
                let (v, _) = self.owners[n.index];
                let p = self.points[n.index];
                v == bv && (p[0] - bp[0]).hypot(p[1] - bp[1]) > SELF_EXCLUSION_PX
            });
            let d1 = (best.distance_sq as f64).sqrt();
            let r = match second {
                None => 0.0,
                Some(s) => {
                    let d2 = (s.distance_sq as f64).sqrt();
                    if d2 > 0.0 { d1 / d2 } else { 1.0 }
                }
            };
            if r <= ratio {
                let (view, model_feature) = self.owners[best.index];
                out.push(MatchPair {
                    model_point: bp,
                    frame_point: [f.keypoint.x, f.keypoint.y],
                    distance: d1,
                    ratio: r,
                    view,
                    model_feature,
                });
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectParams {
    pub ratio: f64,
    pub max_checks: usize,
    pub ransac: RansacParams,
    pub sift: SiftParams,
}

impl Default for DetectParams {
    fn default() -> Self {
        Self {
            ratio: 0.8,
            max_checks: 200,
            ransac: RansacParams::default(),
            sift: SiftParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    /// View whose correspondences produced the homography.
    pub view: usize,
    /// That view's reference corners mapped into the frame: top-left,
    /// top-right, bottom-right, bottom-left.
    pub quad: [[f64; 2]; 4],
    pub inliers: usize,
    pub homography: Homography,
}

/// Signed area if the quadrilateral is strictly convex, else `None`.
fn convex_area(q: &[[f64; 2]; 4]) -> Option<f64> {
    let turns: Vec<f64> = (0..4)
        .map(|i| {
            let (a, b, c) = (q[i], q[(i + 1) % 4], q[(i + 2) % 4]);
            (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0])
        })
        .collect();
    let convex = turns.iter().all(|&t| t > 0.0) || turns.iter().all(|&t| t < 0.0);
    convex.then(|| {
        0.5 * (0..4)
            .map(|i| q[i][0] * q[(i + 1) % 4][1] - q[(i + 1) % 4][0] * q[i][1])
            .sum::<f64>()
            .abs()
    })
}

/// One correspondence per model feature (the closest) and per position pair,
/// so multi-orientation keypoints do not inflate the consensus.
fn dedupe(pairs: &[MatchPair]) -> Vec<MatchPair> {
    let mut by_feature: BTreeMap<(usize, usize), MatchPair> = BTreeMap::new();
    for p in pairs {
        by_feature
            .entry((p.view, p.model_feature))
            .and_modify(|q| {
                if p.distance < q.distance {
                    *q = *p;
                }
            })
            .or_insert(*p);
    }
    let key = |p: &MatchPair| {
        [p.model_point[0], p.model_point[1], p.frame_point[0], p.frame_point[1]]
            .map(|v| (v * 2.0).round() as i64)
    };
    let mut by_position: BTreeMap<(usize, [i64; 4]), MatchPair> = BTreeMap::new();
    for p in by_feature.into_values() {
        by_position.entry((p.view, key(&p))).or_insert(p);
    }
    by_position.into_values().collect()
}

/// A model with its prebuilt index, reusable across frames.
#[derive(Debug, Clone)]
pub struct Detector {
    model: ObjectModel,
    index: MatchIndex,
    params: DetectParams,
}

impl Detector {
    pub fn new(model: ObjectModel, params: DetectParams) -> Result<Self> {
        model.validate()?;
        params.sift.validate()?;
        let index = MatchIndex::build(&model)?;
        Ok(Self {
            model,
            index,
            params,
        })
    }

    pub fn model(&self) -> &ObjectModel {
        &self.model
    }

    pub fn index(&self) -> &MatchIndex {
        &self.index
    }

    /// `Ok(None)` when the object is not found; frames too small for SIFT
    /// simply contain nothing.
    pub fn detect(&self, frame: &Image) -> Result<Option<Detection>> {
        if frame.width() < MIN_INPUT_SIDE || frame.height() < MIN_INPUT_SIDE {
            return Ok(None);
        }
        let feats = extract_sift(frame, &self.params.sift)?;
        self.detect_features(&feats)
    }

    pub fn detect_features(&self, feats: &[Feature]) -> Result<Option<Detection>> {
        let p = &self.params;
        let pairs = dedupe(&self.index.match_features(feats, p.ratio, p.max_checks)?);
        let mut best: Option<Detection> = None;
        for (v, view) in self.model.views.iter().enumerate() {
            let corr: Vec<Correspondence> = pairs
                .iter()
                .filter(|m| m.view == v)
                .map(MatchPair::correspondence)
                .collect();
            let Some((h, inl)) = ransac_homography(&corr, &p.ransac)? else {
                continue;
            };
            let (w, ht) = ((view.width - 1) as f64, (view.height - 1) as f64);
            let corners = [[0.0, 0.0], [w, 0.0], [w, ht], [0.0, ht]];
            let mapped: Option<Vec<[f64; 2]>> = corners.iter().map(|&c| h.apply(c)).collect();
            let Some(mapped) = mapped else { continue };
            let quad = [mapped[0], mapped[1], mapped[2], mapped[3]];
            if convex_area(&quad).is_none_or(|a| a < MIN_QUAD_AREA) {
                continue;
            }
            if best.as_ref().is_none_or(|b| inl.len() > b.inliers) {
                best = Some(Detection {
                    view: v,
                    quad,
                    inliers: inl.len(),
                    homography: h,
                });
            }
        }
        Ok(best)
    }
}

/// One-shot detection; build a [`Detector`] to process many frames.
pub fn detect(model: &ObjectModel, frame: &Image, params: &DetectParams) -> Result<Option<Detection>> {
    Detector::new(model.clone(), *params)?.detect(frame)
}

/// `<frame> x0 y0 x1 y1 x2 y2 x3 y3 inliers` or `<frame> none`.
pub fn format_detection(frame: &str, d: Option<&Detection>) -> String {
    match d {
        None => format!("{frame} none"),
        Some(d) => {
            let coords: Vec<String> = d
                .quad
                .iter()
                .flat_map(|p| p.iter().map(|v| format!("{v:.3}")))
                .collect();
            format!("{frame} {} {}", coords.join(" "), d.inliers)
        }
    }
}
