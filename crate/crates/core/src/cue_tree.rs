//! Segment tree over clip indices and the trajectory compilations derived
//! from it.
//!
//! Each node covers a contiguous clip-index interval `[lo, hi]`; an internal
//! node splits at `mid = (lo + hi) / 2` into `[lo, mid]` and `[mid + 1, hi]`.
//! Backtracking from the selected leaves to the root yields a subtree whose
//! layers, read top-down, narrow from the whole video to the key clips. Each
//! layer becomes one compilation: the sorted union of the clip indices its
//! nodes cover.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CueTreeError {
    #[error("a tree needs at least one leaf, got {0}")]
    InvalidSize(usize),
    #[error("leaf {index} is outside [0, {n_leaves})")]
    OutOfRange { index: usize, n_leaves: usize },
    #[error("no leaves selected")]
    EmptySelection,
}

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Interval {
    pub lo: usize,
    pub hi: usize,
}

impl Interval {
    pub fn is_leaf(&self) -> bool {
        self.lo == self.hi
    }

    pub fn indices(&self) -> std::ops::RangeInclusive<usize> {
        self.lo..=self.hi
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.lo, self.hi)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub interval: Interval,
    pub depth: usize,
    pub parent: Option<NodeId>,
    pub children: Option<(NodeId, NodeId)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CueTree {
    n_leaves: usize,
    nodes: Vec<Node>,
    // leaf_of[i] is the node covering [i, i]
    leaf_of: Vec<NodeId>,
}

impl CueTree {
    pub const ROOT: NodeId = 0;

    pub fn build(n_leaves: usize) -> Result<Self, CueTreeError> {
        if n_leaves == 0 {
            return Err(CueTreeError::InvalidSize(n_leaves));
        }
        let mut tree = CueTree {
            n_leaves,
            nodes: Vec::with_capacity(2 * n_leaves - 1),
            leaf_of: vec![0; n_leaves],
        };
        tree.nodes.push(Node {
            interval: Interval {
                lo: 0,
                hi: n_leaves - 1,
            },
            depth: 0,
            parent: None,
            children: None,
        });
        let mut stack = vec![Self::ROOT];
        while let Some(id) = stack.pop() {
            let Interval { lo, hi } = tree.nodes[id].interval;
            if lo == hi {
                tree.leaf_of[lo] = id;
                continue;
            }
            let mid = (lo + hi) / 2;
            let depth = tree.nodes[id].depth + 1;
            let left = tree.push(Interval { lo, hi: mid }, depth, id);
            let right = tree.push(Interval { lo: mid + 1, hi }, depth, id);
            tree.nodes[id].children = Some((left, right));
            stack.push(right);
            stack.push(left);
        }
        Ok(tree)
    }

    fn push(&mut self, interval: Interval, depth: usize, parent: NodeId) -> NodeId {
        self.nodes.push(Node {
            interval,
            depth,
            parent: Some(parent),
            children: None,
        });
        self.nodes.len() - 1
    }

    pub fn n_leaves(&self) -> usize {
        self.n_leaves
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn leaf(&self, index: usize) -> NodeId {
        self.leaf_of[index]
    }

    /// Number of levels, counting the root level.
    pub fn levels(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0) + 1
    }

    /// Node ids from the root down to the leaf covering `index`.
    pub fn path_to_leaf(&self, index: usize) -> Vec<NodeId> {
        let mut path = Vec::new();
        let mut cur = Some(self.leaf_of[index]);
        while let Some(id) = cur {
            path.push(id);
            cur = self.nodes[id].parent;
        }
        path.reverse();
        path
    }

    pub fn backtrack(
        &self,
        selected: impl IntoIterator<Item = usize>,
    ) -> Result<TrajectorySubtree<'_>, CueTreeError> {
        let selected: BTreeSet<usize> = selected.into_iter().collect();
        if selected.is_empty() {
            return Err(CueTreeError::EmptySelection);
        }
        if let Some(&index) = selected.iter().find(|&&i| i >= self.n_leaves) {
            return Err(CueTreeError::OutOfRange {
                index,
                n_leaves: self.n_leaves,
            });
        }
        let mut layers: Vec<BTreeSet<(Interval, NodeId)>> = Vec::new();
        for &leaf in &selected {
            for id in self.path_to_leaf(leaf) {
                let depth = self.nodes[id].depth;
                if layers.len() <= depth {
                    layers.resize_with(depth + 1, BTreeSet::new);
                }
                layers[depth].insert((self.nodes[id].interval, id));
            }
        }
        Ok(TrajectorySubtree {
            tree: self,
            selected,
            layers: layers
                .into_iter()
                .map(|layer| layer.into_iter().map(|(_, id)| id).collect())
                .collect(),
        })
    }
}

/// Union of the root-to-leaf paths of the selected leaves, grouped by depth.
#[derive(Debug, Clone)]
pub struct TrajectorySubtree<'a> {
    tree: &'a CueTree,
    selected: BTreeSet<usize>,
    layers: Vec<Vec<NodeId>>,
}

impl<'a> TrajectorySubtree<'a> {
    pub fn tree(&self) -> &'a CueTree {
        self.tree
    }

    pub fn selected(&self) -> &BTreeSet<usize> {
        &self.selected
    }

    /// Node ids per depth, each layer ordered by interval start.
    pub fn layers(&self) -> &[Vec<NodeId>] {
        &self.layers
    }

    pub fn layer_intervals(&self) -> Vec<Vec<Interval>> {
        self.layers
            .iter()
            .map(|l| l.iter().map(|&id| self.tree.node(id).interval).collect())
            .collect()
    }

    /// One clip-index set per layer, before deduplication. A selected leaf
    /// shallower than the deepest layer persists into every deeper layer.
    pub fn raw_compilations(&self) -> Vec<Vec<usize>> {
        (0..self.layers.len())
            .map(|depth| {
                let mut clips = BTreeSet::new();
                for &id in &self.layers[depth] {
                    clips.extend(self.tree.node(id).interval.indices());
                }
                for &leaf in &self.selected {
                    if self.tree.node(self.tree.leaf(leaf)).depth < depth {
                        clips.insert(leaf);
                    }
                }
                clips.into_iter().collect()
            })
            .collect()
    }

    /// Deduplicated compilations, first occurrence kept.
    pub fn compilations(&self) -> Vec<Compilation> {
        let mut seen = BTreeSet::new();
        self.raw_compilations()
            .into_iter()
            .filter(|c| seen.insert(c.clone()))
            .map(|clip_indices| Compilation {
                clip_indices,
                caption: None,
            })
            .collect()
    }
}

/// Concatenation of the clips under one trajectory layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Compilation {
    pub clip_indices: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
}

/// True when each compilation is a strict subset of its predecessor.
pub fn is_strict_chain(compilations: &[Compilation]) -> bool {
    compilations.windows(2).all(|w| {
        let outer: BTreeSet<_> = w[0].clip_indices.iter().collect();
        let inner: BTreeSet<_> = w[1].clip_indices.iter().collect();
        inner.len() < outer.len() && inner.is_subset(&outer)
    })
}
