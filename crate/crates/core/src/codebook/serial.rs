//! JSON forest files. Trees are stored as nested node records so the file
//! reads like the tree it describes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ErtForest, ErtParams, Node, Tree, MAX_DEPTH_LIMIT};
use crate::error::{Error, Result};
use crate::fsio::{read_bytes, write_atomic};

pub const FOREST_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ForestFile {
    version: u32,
    n_trees: usize,
    max_depth: usize,
    dim: usize,
    seed: u64,
    min_leaf: usize,
    candidates: usize,
    vocabulary_size: usize,
    trees: Vec<NodeRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum NodeRecord {
    Split {
        dim: u32,
        threshold: f32,
        left: Box<NodeRecord>,
        right: Box<NodeRecord>,
    },
    Leaf {
        word: u32,
    },
}

fn to_record(tree: &Tree, i: usize) -> NodeRecord {
    match tree.nodes[i] {
        Node::Split {
            dim,
            threshold,
            left,
            right,
        } => NodeRecord::Split {
            dim,
            threshold,
            left: Box::new(to_record(tree, left as usize)),
            right: Box::new(to_record(tree, right as usize)),
        },
        Node::Leaf { word } => NodeRecord::Leaf { word },
    }
}

struct Flattener<'a> {
    dim: usize,
    max_depth: usize,
    nodes: Vec<Node>,
    words: &'a mut Vec<u32>,
}

impl Flattener<'_> {
    fn push(&mut self, rec: &NodeRecord, depth: usize) -> Result<u32> {
        if depth > self.max_depth {
            return Err(Error::Malformed(format!(
                "tree deeper than max_depth {}",
                self.max_depth
            )));
        }
        let slot = self.nodes.len() as u32;
        match rec {
            NodeRecord::Leaf { word } => {
                self.words.push(*word);
                self.nodes.push(Node::Leaf { word: *word });
            }
            NodeRecord::Split {
                dim,
                threshold,
                left,
                right,
            } => {
                if *dim as usize >= self.dim || !threshold.is_finite() {
                    return Err(Error::Malformed(format!(
                        "split on dim {dim} at {threshold} is invalid for dim {}",
                        self.dim
                    )));
                }
                self.nodes.push(Node::Leaf { word: 0 });
                let l = self.push(left, depth + 1)?;
                let r = self.push(right, depth + 1)?;
                self.nodes[slot as usize] = Node::Split {
                    dim: *dim,
                    threshold: *threshold,
                    left: l,
                    right: r,
                };
            }
        }
        Ok(slot)
    }
}

pub fn forest_to_json(forest: &ErtForest) -> Result<Vec<u8>> {
    let p = &forest.params;
    let file = ForestFile {
        version: FOREST_VERSION,
        n_trees: forest.trees.len(),
        max_depth: p.max_depth,
        dim: forest.dim,
        seed: p.seed,
        min_leaf: p.min_leaf,
        candidates: p.candidates,
        vocabulary_size: forest.vocabulary_size(),
        trees: forest.trees.iter().map(|t| to_record(t, 0)).collect(),
    };
    Ok(serde_json::to_vec(&file)?)
}

pub fn forest_from_json(bytes: &[u8]) -> Result<ErtForest> {
    #[derive(Deserialize)]
    struct Version {
        version: u32,
    }
    let v: Version = serde_json::from_slice(bytes)?;
    if v.version != FOREST_VERSION {
        return Err(Error::VersionMismatch {
            expected: FOREST_VERSION,
            found: v.version,
        });
    }
    let file: ForestFile = serde_json::from_slice(bytes)?;
    if file.n_trees != file.trees.len() || file.n_trees == 0 {
        return Err(Error::Malformed(format!(
            "n_trees {} but {} trees stored",
            file.n_trees,
            file.trees.len()
        )));
    }
    if file.dim == 0 || file.max_depth == 0 || file.max_depth > MAX_DEPTH_LIMIT {
        return Err(Error::Malformed("dim or max_depth out of range".into()));
    }
    let mut words = Vec::new();
    let mut trees = Vec::with_capacity(file.n_trees);
    for rec in &file.trees {
        let mut fl = Flattener {
            dim: file.dim,
            max_depth: file.max_depth,
            nodes: Vec::new(),
            words: &mut words,
        };
        fl.push(rec, 0)?;
        trees.push(Tree { nodes: fl.nodes });
    }
    if words.iter().enumerate().any(|(i, &w)| w as usize != i) {
        return Err(Error::Malformed(
            "leaf words are not numbered 0..V-1 depth-first".into(),
        ));
    }
    if words.len() != file.vocabulary_size {
        return Err(Error::Malformed(format!(
            "vocabulary_size {} but {} leaves",
            file.vocabulary_size,
            words.len()
        )));
    }
    let params = ErtParams {
        n_trees: file.n_trees,
        max_depth: file.max_depth,
        min_leaf: file.min_leaf,
        candidates: file.candidates,
        seed: file.seed,
    };
    Ok(ErtForest::from_parts(trees, params, file.dim))
}

pub fn save_forest(path: impl AsRef<Path>, forest: &ErtForest) -> Result<()> {
    write_atomic(path, &forest_to_json(forest)?)
}

pub fn load_forest(path: impl AsRef<Path>) -> Result<ErtForest> {
    forest_from_json(&read_bytes(path)?)
}
