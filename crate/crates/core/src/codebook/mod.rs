//! Extremely-randomized-trees visual vocabulary.
//!
//! Each tree recursively splits its share of the training descriptors on a
//! random dimension at a random threshold drawn uniformly between that
//! dimension's minimum and maximum over the node. Among `candidates` random
//! draws the most balanced split wins. Labels are never used. The leaves,
//! numbered depth-first and offset by the leaf counts of preceding trees,
//! are the visual words.
//!
//! Every node draws from its own PRNG stream keyed by `(seed, tree, node)`,
//! where `node` is the heap index of the node. A forest grown deeper with the
//! same seed therefore refines the shallower one leaf by leaf.

mod histogram;
mod serial;

pub use histogram::{encode, fuse, word_counts, BowHistogram};
pub use serial::{forest_from_json, forest_to_json, load_forest, save_forest, FOREST_VERSION};

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::features::Descriptor;
use crate::registry::Named;
use crate::rng;

const ROLE_SAMPLE: u64 = 0x5a4d_504c;
const ROLE_NODE: u64 = 0x4e4f_4445;
/// Heap indices must fit in a u64 and nested serialization must stay shallow.
pub const MAX_DEPTH_LIMIT: usize = 32;

/// Row-major matrix of training descriptors.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorMatrix {
    dim: usize,
    data: Vec<f32>,
}

impl DescriptorMatrix {
    pub fn new(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(Error::InvalidParameter(format!(
                "{} values do not form rows of {dim}",
                data.len()
            )));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let dim = rows
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::EmptyInput("no descriptors".into()))?;
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }
}

/// Draws `min(per_image, available)` descriptors from each image uniformly
/// without replacement and concatenates them in image order.
pub fn sample_training_descriptors(
    images: &[Vec<Descriptor>],
    per_image: usize,
    seed: u64,
) -> Result<DescriptorMatrix> {
    if images.is_empty() {
        return Err(Error::EmptyInput("no images to sample from".into()));
    }
    if per_image == 0 {
        return Err(Error::InvalidParameter("per_image must be >= 1".into()));
    }
    let dim = images
        .iter()
        .flatten()
        .map(Descriptor::dim)
        .next()
        .ok_or_else(|| Error::EmptyInput("no descriptors in any image".into()))?;
    let mut data = Vec::new();
    for (i, descs) in images.iter().enumerate() {
        let take = per_image.min(descs.len());
        let mut rng = rng::stream(seed, ROLE_SAMPLE, i as u64);
        let mut picked = index::sample(&mut rng, descs.len(), take).into_vec();
        picked.sort_unstable();
        for j in picked {
            let d = &descs[j];
            if d.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: d.dim(),
                });
            }
            data.extend_from_slice(d.values());
        }
    }
    DescriptorMatrix::new(dim, data)
}

/// Forest construction parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ErtParams {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Each side of a split keeps at least this many training descriptors.
    pub min_leaf: usize,
    /// Random (dimension, threshold) draws per node.
    pub candidates: usize,
    pub seed: u64,
}

impl Default for ErtParams {
    fn default() -> Self {
        Self {
            n_trees: 4,
            max_depth: 12,
            min_leaf: 1,
            candidates: 5,
            seed: 0,
        }
    }
}

impl ErtParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::InvalidParameter("n_trees must be >= 1".into()));
        }
        if self.max_depth == 0 || self.max_depth > MAX_DEPTH_LIMIT {
            return Err(Error::InvalidParameter(format!(
                "max_depth must be in 1..={MAX_DEPTH_LIMIT}"
            )));
        }
        if self.min_leaf == 0 || self.candidates == 0 {
            return Err(Error::InvalidParameter(
                "min_leaf and candidates must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Node {
    Split {
        dim: u32,
        threshold: f32,
        left: u32,
        right: u32,
    },
    Leaf {
        word: u32,
    },
}

/// One tree stored as an arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Tree {
    pub(crate) nodes: Vec<Node>,
}

impl Tree {
    #[inline]
    fn route(&self, d: &[f32]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Split {
                    dim,
                    threshold,
                    left,
                    right,
                } => {
                    i = if d[dim as usize] < threshold {
                        left as usize
                    } else {
                        right as usize
                    }
                }
                Node::Leaf { word } => return word as usize,
            }
        }
    }

    fn depth(&self) -> usize {
        fn walk(t: &Tree, i: usize) -> usize {
            match t.nodes[i] {
                Node::Split { left, right, .. } => {
                    1 + walk(t, left as usize).max(walk(t, right as usize))
                }
                Node::Leaf { .. } => 0,
            }
        }
        walk(self, 0)
    }
}

/// The vocabulary interface used for word assignment.
pub trait Vocabulary: Named + Send + Sync {
    /// Descriptor length accepted by [`Vocabulary::assign`].
    fn dim(&self) -> usize;

    /// Number of distinct words.
    fn size(&self) -> usize;

    /// Word ids for one descriptor.
    fn assign(&self, d: &[f32]) -> Result<Vec<usize>>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErtForest {
    pub(crate) trees: Vec<Tree>,
    pub(crate) params: ErtParams,
    pub(crate) dim: usize,
    vocabulary_size: usize,
}

impl ErtForest {
    pub(crate) fn from_parts(trees: Vec<Tree>, params: ErtParams, dim: usize) -> Self {
        let vocabulary_size = trees
            .iter()
            .map(|t| {
                t.nodes
                    .iter()
                    .filter(|n| matches!(n, Node::Leaf { .. }))
                    .count()
            })
            .sum();
        Self {
            trees,
            params,
            dim,
            vocabulary_size,
        }
    }

    pub fn params(&self) -> &ErtParams {
        &self.params
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn max_depth(&self) -> usize {
        self.params.max_depth
    }

    pub fn descriptor_dim(&self) -> usize {
        self.dim
    }

    /// V, the total number of leaves.
    pub fn vocabulary_size(&self) -> usize {
        self.vocabulary_size
    }

    /// Longest root-to-leaf path over all trees.
    pub fn depth(&self) -> usize {
        self.trees.iter().map(Tree::depth).max().unwrap_or(0)
    }

    /// One global word id per tree. Routing goes left iff
    /// `value[split_dim] < threshold`.
    pub fn assign_words(&self, d: &[f32]) -> Result<Vec<usize>> {
        if d.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: d.len(),
            });
        }
        Ok(self.trees.iter().map(|t| t.route(d)).collect())
    }
}

impl Named for ErtForest {
    fn name(&self) -> &str {
        "ert"
    }
}

impl Vocabulary for ErtForest {
    fn dim(&self) -> usize {
        self.dim
    }

    fn size(&self) -> usize {
        self.vocabulary_size
    }

    fn assign(&self, d: &[f32]) -> Result<Vec<usize>> {
        self.assign_words(d)
    }
}

struct Builder<'a> {
    train: &'a DescriptorMatrix,
    params: &'a ErtParams,
    tree_index: u64,
    nodes: Vec<Node>,
    next_word: u32,
}

impl Builder<'_> {
    fn grow(&mut self, rows: &mut [usize], depth: usize, heap_id: u64) -> u32 {
        let slot = self.nodes.len() as u32;
        self.nodes.push(Node::Leaf { word: 0 });
        let split = if depth < self.params.max_depth && rows.len() >= 2 * self.params.min_leaf {
            self.choose_split(rows, heap_id)
        } else {
            None
        };
        match split {
            Some((dim, threshold)) => {
                let n_left = partition(rows, |&r| self.train.row(r)[dim] < threshold);
                let (l, r) = rows.split_at_mut(n_left);
                let left = self.grow(l, depth + 1, 2 * heap_id);
                let right = self.grow(r, depth + 1, 2 * heap_id + 1);
                self.nodes[slot as usize] = Node::Split {
                    dim: dim as u32,
                    threshold,
                    left,
                    right,
                };
            }
            None => {
                self.nodes[slot as usize] = Node::Leaf {
                    word: self.next_word,
                };
                self.next_word += 1;
            }
        }
        slot
    }

    fn choose_split(&self, rows: &[usize], heap_id: u64) -> Option<(usize, f32)> {
        let mut rng = rng::stream(
            self.params.seed,
            ROLE_NODE ^ (self.tree_index << 40),
            heap_id,
        );
        let mut best: Option<(usize, usize, f32)> = None;
        for _ in 0..self.params.candidates {
            let dim = rng.random_range(0..self.train.dim());
            let u: f32 = rng.random();
            let (lo, hi) = rows.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &r| {
                let v = self.train.row(r)[dim];
                (lo.min(v), hi.max(v))
            });
            if !(hi > lo) {
                continue;
            }
            let threshold = lo + (hi - lo) * u;
            let left = rows
                .iter()
                .filter(|&&r| self.train.row(r)[dim] < threshold)
                .count();
            let right = rows.len() - left;
            if left < self.params.min_leaf || right < self.params.min_leaf {
                continue;
            }
            let imbalance = left.abs_diff(right);
            if best.is_none_or(|(b, _, _)| imbalance < b) {
                best = Some((imbalance, dim, threshold));
            }
        }
        best.map(|(_, dim, threshold)| (dim, threshold))
    }
}

/// Stable two-way partition; returns the size of the `pred`-true prefix.
fn partition<T: Copy>(items: &mut [T], pred: impl Fn(&T) -> bool) -> usize {
    let (yes, no): (Vec<T>, Vec<T>) = items.iter().partition(|x| pred(x));
    let n = yes.len();
    for (slot, v) in items.iter_mut().zip(yes.into_iter().chain(no)) {
        *slot = v;
    }
    n
}

pub fn build_forest(train: &DescriptorMatrix, params: &ErtParams) -> Result<ErtForest> {
    params.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyInput("empty training set".into()));
    }
    let mut trees = Vec::with_capacity(params.n_trees);
    let mut offset = 0u32;
    for t in 0..params.n_trees {
        let mut rows: Vec<usize> = (0..train.len()).collect();
        let mut b = Builder {
            train,
            params,
            tree_index: t as u64,
            nodes: Vec::new(),
            next_word: 0,
        };
        b.grow(&mut rows, 0, 1);
        let mut nodes = b.nodes;
        for n in &mut nodes {
            if let Node::Leaf { word } = n {
                *word += offset;
            }
        }
        offset += b.next_word;
        trees.push(Tree { nodes });
    }
    Ok(ErtForest::from_parts(trees, *params, train.dim()))
}
