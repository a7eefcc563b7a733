//! kd-tree over fixed-length f32 vectors with best-bin-first search.
//!
//! Each internal node splits on its highest-variance dimension at the median.
//! Search descends to a leaf, queueing every branch not taken with the squared
//! distance from the query to that branch's cell, and stops after
//! `max_checks` stored vectors have been compared or when no queued cell can
//! hold anything closer than the current k-th neighbour.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::features::distance_sq;

#[derive(Debug, Clone)]
enum Node {
    /// `right_min` is the median; `left_max` is the largest coordinate on
    /// the left. Together they bound the far cell more tightly than the
    /// median alone.
    Split {
        dim: usize,
        left_max: f32,
        right_min: f32,
        left: usize,
        right: usize,
    },
    Leaf {
        point: usize,
    },
}

#[derive(Debug, Clone)]
pub struct KdTree {
    dim: usize,
    data: Vec<f32>,
    nodes: Vec<Node>,
}

/// One search result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance_sq: f32,
}

/// A queued subtree with the per-dimension squared gaps from the query to
/// its cell; `priority` is their sum.
#[derive(PartialEq)]
struct Branch {
    priority: f32,
    node: usize,
    gaps: Vec<(usize, f32)>,
}

impl Eq for Branch {}

impl Ord for Branch {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on priority, then node id for determinism.
        other
            .priority
            .total_cmp(&self.priority)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Branch {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl KdTree {
    /// Builds over row-major `data`; an empty tree is allowed.
    pub fn new(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(Error::InvalidParameter(format!(
                "{} values do not form rows of {dim}",
                data.len()
            )));
        }
        let mut tree = Self {
            dim,
            data,
            nodes: Vec::new(),
        };
        let mut idx: Vec<usize> = (0..tree.len()).collect();
        if !idx.is_empty() {
            tree.build(&mut idx);
        }
        Ok(tree)
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    fn build(&mut self, idx: &mut [usize]) -> usize {
        let slot = self.nodes.len();
        if idx.len() == 1 {
            self.nodes.push(Node::Leaf { point: idx[0] });
            return slot;
        }
        self.nodes.push(Node::Leaf { point: usize::MAX });
        let dim = self.widest_dim(idx);
        let mid = idx.len() / 2;
        idx.select_nth_unstable_by(mid, |&a, &b| {
            self.point(a)[dim]
                .total_cmp(&self.point(b)[dim])
                .then(a.cmp(&b))
        });
        // Left holds values <= split and right values >= split.
        let value = self.point(idx[mid])[dim];
        let left_max = idx[..mid]
            .iter()
            .map(|&i| self.point(i)[dim])
            .fold(f32::NEG_INFINITY, f32::max);
        let (l, r) = idx.split_at_mut(mid);
        let left = self.build(l);
        let right = self.build(r);
        self.nodes[slot] = Node::Split {
            dim,
            left_max,
            right_min: value,
            left,
            right,
        };
        slot
    }

    fn widest_dim(&self, idx: &[usize]) -> usize {
        let n = idx.len() as f64;
        let mut mean = vec![0.0f64; self.dim];
        for &i in idx {
            for (m, &v) in mean.iter_mut().zip(self.point(i)) {
                *m += v as f64;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0f64; self.dim];
        for &i in idx {
            for ((s, &v), m) in var.iter_mut().zip(self.point(i)).zip(&mean) {
                *s += (v as f64 - m).powi(2);
            }
        }
        var.iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (d, &v)| if v > best.1 { (d, v) } else { best })
            .0
    }

    /// Up to `k` approximate nearest neighbours, closest first.
    pub fn search(&self, query: &[f32], k: usize, max_checks: usize) -> Result<Vec<Neighbor>> {
        if query.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: query.len(),
            });
        }
        let mut best: Vec<Neighbor> = Vec::with_capacity(k + 1);
        if self.nodes.is_empty() || k == 0 {
            return Ok(best);
        }
        let mut queue = BinaryHeap::new();
        queue.push(Branch {
            priority: 0.0,
            node: 0,
            gaps: Vec::new(),
        });
        let mut checks = 0;
        while let Some(Branch {
            priority,
            node,
            gaps,
        }) = queue.pop()
        {
            if checks >= max_checks.max(1) {
                break;
            }
            if best.len() == k && priority > best[k - 1].distance_sq {
                break;
            }
            let mut cur = node;
            loop {
                match self.nodes[cur] {
                    Node::Split {
                        dim,
                        left_max,
                        right_min,
                        left,
                        right,
                    } => {
                        let q = query[dim];
                        let (near, far, bound) = if q < 0.5 * (left_max + right_min) {
                            (left, right, right_min)
                        } else {
                            (right, left, left_max)
                        };
                        let gap = (q - bound) * (q - bound);
                        let mut far_gaps = gaps.clone();
                        let old = match far_gaps.iter_mut().find(|(d, _)| *d == dim) {
                            Some(slot) => std::mem::replace(&mut slot.1, gap),
                            None => {
                                far_gaps.push((dim, gap));
                                0.0
                            }
                        };
                        queue.push(Branch {
                            priority: priority - old + gap,
                            node: far,
                            gaps: far_gaps,
                        });
                        cur = near;
                    }
                    Node::Leaf { point } => {
                        checks += 1;
                        let d = distance_sq(query, self.point(point));
                        insert(&mut best, k, Neighbor {
                            index: point,
                            distance_sq: d,
                        });
                        break;
                    }
                }
            }
        }
        Ok(best)
    }

    /// Exhaustive search, for reference.
    pub fn linear_search(&self, query: &[f32], k: usize) -> Vec<Neighbor> {
        let mut best = Vec::with_capacity(k + 1);
        for i in 0..self.len() {
            insert(&mut best, k, Neighbor {
                index: i,
                distance_sq: distance_sq(query, self.point(i)),
            });
        }
        best
    }
}

/// Keeps `best` sorted by (distance, index) and at most `k` long.
fn insert(best: &mut Vec<Neighbor>, k: usize, n: Neighbor) {
    let key = |m: &Neighbor| (m.distance_sq, m.index);
    if best.len() == k && key(&n) >= key(&best[k - 1]) {
        return;
    }
    let pos = best.partition_point(|m| {
        m.distance_sq < n.distance_sq || (m.distance_sq == n.distance_sq && m.index < n.index)
    });
    best.insert(pos, n);
    best.truncate(k);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;

    fn random(n: usize, dim: usize, seed: u64) -> Vec<f32> {
        let mut rng = seeded(seed);
        (0..n * dim).map(|_| rng.random()).collect()
    }

    #[test]
    fn stored_point_is_found_at_zero_distance() {
        let t = KdTree::new(8, random(300, 8, 1)).unwrap();
        for i in [0, 17, 299] {
            let q = t.point(i).to_vec();
            let r = t.search(&q, 1, 50).unwrap();
            assert_eq!(r[0].distance_sq, 0.0);
            assert_eq!(r[0].index, i);
        }
    }

    #[test]
    fn single_point_is_always_nearest() {
        let t = KdTree::new(3, vec![0.1, 0.2, 0.3]).unwrap();
        let r = t.search(&[9.0, -4.0, 2.0], 2, 200).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].index, 0);
        assert!(t.search(&[1.0], 1, 1).is_err());
        assert!(KdTree::new(3, vec![]).unwrap().search(&[0.0; 3], 1, 5).unwrap().is_empty());
    }

    #[test]
    fn unlimited_checks_are_exact() {
        let t = KdTree::new(6, random(500, 6, 2)).unwrap();
        let mut rng = seeded(3);
        for _ in 0..100 {
            let q: Vec<f32> = (0..6).map(|_| rng.random()).collect();
            assert_eq!(t.search(&q, 3, usize::MAX).unwrap(), t.linear_search(&q, 3));
        }
    }

    #[test]
    fn duplicate_points_are_handled() {
        let mut data = vec![0.5f32; 4 * 20];
        data.extend([0.9, 0.9, 0.9, 0.9]);
        let t = KdTree::new(4, data).unwrap();
        let r = t.search(&[1.0; 4], 2, usize::MAX).unwrap();
        assert_eq!(r[0].index, 20);
        assert_eq!(r[1].index, 0);
    }

    #[test]
    fn results_are_sorted_and_bounded() {
        let t = KdTree::new(16, random(1000, 16, 4)).unwrap();
        let q = random(1, 16, 5);
        let r = t.search(&q, 5, 200).unwrap();
        assert_eq!(r.len(), 5);
        assert!(r.windows(2).all(|w| w[0].distance_sq <= w[1].distance_sq));
    }
}
