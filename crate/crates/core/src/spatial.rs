//! Exact nearest-neighbour search over a fixed point set.
//!
//! A median-split KD-tree over the valid points of a reference cloud. The
//! split axis is the widest extent of the node's bounding box; points are
//! ordered by `(coordinate, original index)` so the build is deterministic.
//! Queries return the exact minimiser of the squared Euclidean distance,
//! preferring the lowest original index on exact ties.

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{PointCloud, Vec3};

pub const DEFAULT_LEAF_SIZE: usize = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IndexError {
    #[error("reference cloud has no valid points")]
    EmptyReference,
    #[error("leaf size must be at least 1")]
    ZeroLeafSize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    /// Index into the reference cloud the index was built from.
    pub index: usize,
    pub distance_squared: f64,
    pub point: Vec3,
}

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: u32,
        end: u32,
    },
    Split {
        axis: u8,
        value: f64,
        left: u32,
        right: u32,
    },
}

#[derive(Debug, Clone)]
pub struct SpatialIndex {
    nodes: Vec<Node>,
    /// Points in tree order.
    points: Vec<Vec3>,
    /// Original cloud index of each entry in `points`.
    ids: Vec<usize>,
    leaf_size: usize,
}

impl SpatialIndex {
    pub fn build(reference: &PointCloud, leaf_size: usize) -> Result<Self, IndexError> {
        if leaf_size == 0 {
            return Err(IndexError::ZeroLeafSize);
        }
        let mut ids: Vec<usize> = reference.iter_valid().map(|(i, _)| i).collect();
        if ids.is_empty() {
            return Err(IndexError::EmptyReference);
        }
        assert!(ids.len() < u32::MAX as usize, "reference cloud too large");
        let src = reference.points();
        let mut nodes = Vec::with_capacity(2 * ids.len() / leaf_size + 1);
        build_node(src, &mut ids, 0, leaf_size, &mut nodes);
        let points = ids.iter().map(|&i| src[i]).collect();
        Ok(Self {
            nodes,
            points,
            ids,
            leaf_size,
        })
    }

    pub fn with_default_leaf(reference: &PointCloud) -> Result<Self, IndexError> {
        Self::build(reference, DEFAULT_LEAF_SIZE)
    }

    /// Number of indexed (valid) points.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn leaf_size(&self) -> usize {
        self.leaf_size
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Original index of the indexed point stored at tree slot `slot`.
    pub fn indexed_ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn nearest(&self, q: Vec3) -> Neighbor {
        let mut best = Neighbor {
            index: usize::MAX,
            distance_squared: f64::INFINITY,
            point: Vec3::ZERO,
        };
        self.search(0, q, &mut best);
        best
    }

    /// `nearest` for every valid query point; invalid entries get `None`.
    pub fn nearest_all(&self, queries: &PointCloud) -> Vec<Option<Neighbor>> {
        queries
            .points()
            .par_iter()
            .zip(queries.mask().par_iter())
            .map(|(&q, &ok)| ok.then(|| self.nearest(q)))
            .collect()
    }

    fn search(&self, node: usize, q: Vec3, best: &mut Neighbor) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for slot in start as usize..end as usize {
                    let d = q.distance_squared(self.points[slot]);
                    let id = self.ids[slot];
                    if d < best.distance_squared || (d == best.distance_squared && id < best.index)
                    {
                        best.distance_squared = d;
                        best.index = id;
                        best.point = self.points[slot];
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q.component(axis as usize) - value;
                let (near, far) = if diff < 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.search(near as usize, q, best);
                // `<=` keeps equal-distance candidates reachable for tie-breaking.
                if diff * diff <= best.distance_squared {
                    self.search(far as usize, q, best);
                }
            }
        }
    }
}

fn build_node(
    src: &[Vec3],
    ids: &mut [usize],
    offset: usize,
    leaf_size: usize,
    nodes: &mut Vec<Node>,
) -> u32 {
    let me = nodes.len() as u32;
    if ids.len() <= leaf_size {
        nodes.push(Node::Leaf {
            start: offset as u32,
            end: (offset + ids.len()) as u32,
        });
        return me;
    }
    let axis = widest_axis(src, ids);
    let key = |i: &usize| (src[*i].component(axis), *i);
    let mid = ids.len() / 2;
    ids.select_nth_unstable_by(mid, |a, b| {
        let (ka, kb) = (key(a), key(b));
        ka.0.total_cmp(&kb.0).then(ka.1.cmp(&kb.1))
    });
    let value = src[ids[mid]].component(axis);
    if !value.is_finite() {
        // Valid points are finite; this only guards against misuse.
        nodes.push(Node::Leaf {
            start: offset as u32,
            end: (offset + ids.len()) as u32,
        });
        return me;
    }
    nodes.push(Node::Leaf { start: 0, end: 0 });
    let (lo, hi) = ids.split_at_mut(mid);
    let left = build_node(src, lo, offset, leaf_size, nodes);
    let right = build_node(src, hi, offset + mid, leaf_size, nodes);
    nodes[me as usize] = Node::Split {
        axis: axis as u8,
        value,
        left,
        right,
    };
    me
}

fn widest_axis(src: &[Vec3], ids: &[usize]) -> usize {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in ids {
        let p = src[i].to_array();
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let ext = [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]];
    let mut axis = 0;
    for k in 1..3 {
        if ext[k] > ext[axis] {
            axis = k;
        }
    }
    axis
}
