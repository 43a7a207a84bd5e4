//! Binary Huffman tree over the action vocabulary.
//!
//! Node numbering: leaves are `0..n` (the action ids), inner nodes are
//! `n..2n-1` in creation order, so the root is the last node. Inner node `n + i`
//! owns row `i` of the inner-vector matrix.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// Branch direction: the child that is the first of a merged pair is `LEFT`.
pub const LEFT: i8 = 1;
pub const RIGHT: i8 = -1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HuffmanTree {
    leaves: usize,
    parent: Vec<Option<usize>>,
    direction: Vec<i8>,
    paths: Vec<Vec<u32>>,
    codes: Vec<Vec<i8>>,
}

impl HuffmanTree {
    /// Builds the tree from per-action counts.
    ///
    /// Equal counts are merged combined-nodes first (by creation order), then
    /// leaves (by action id), which makes the result a pure function of `counts`.
    pub fn build(counts: &[u64]) -> Result<Self> {
        let n = counts.len();
        if n == 0 {
            return Err(Error::EmptyVocabulary);
        }
        if counts.iter().any(|&c| c == 0) {
            return Err(Error::Config("huffman counts must be at least 1".into()));
        }
        let total = 2 * n - 1;
        let mut parent = vec![None; total];
        let mut direction = vec![0i8; total];

        // (count, class, order, node); class 0 = combined, 1 = leaf
        let mut heap: BinaryHeap<Reverse<(u64, u8, usize, usize)>> = counts
            .iter()
            .enumerate()
            .map(|(id, &c)| Reverse((c, 1, id, id)))
            .collect();
        let mut next = n;
        while heap.len() > 1 {
            let Reverse((c1, _, _, first)) = heap.pop().expect("len > 1");
            let Reverse((c2, _, _, second)) = heap.pop().expect("len > 1");
            parent[first] = Some(next);
            direction[first] = LEFT;
            parent[second] = Some(next);
            direction[second] = RIGHT;
            heap.push(Reverse((c1 + c2, 0, next - n, next)));
            next += 1;
        }
        Self::assemble(n, parent, direction)
    }

    /// Rebuilds a tree from its parent and direction arrays (model files).
    pub fn from_parent_arrays(
        leaves: usize,
        parent: Vec<Option<usize>>,
        direction: Vec<i8>,
    ) -> Result<Self> {
        let bad = |m: &str| Err(Error::Model(format!("invalid huffman tree: {m}")));
        if leaves == 0 {
            return Err(Error::EmptyVocabulary);
        }
        let total = 2 * leaves - 1;
        if parent.len() != total || direction.len() != total {
            return bad("array lengths do not match the vocabulary");
        }
        if parent[total - 1].is_some() {
            return bad("last node must be the root");
        }
        let mut seen = vec![(0u8, 0u8); total];
        for node in 0..total - 1 {
            let Some(p) = parent[node] else {
                return bad("more than one root");
            };
            if p < leaves || p >= total || p <= node {
                return bad("parent must be a later inner node");
            }
            match direction[node] {
                LEFT => seen[p].0 += 1,
                RIGHT => seen[p].1 += 1,
                _ => return bad("direction must be +1 or -1"),
            }
        }
        if (leaves..total).any(|p| seen[p] != (1, 1)) {
            return bad("each inner node needs one left and one right child");
        }
        Self::assemble(leaves, parent, direction)
    }

    fn assemble(leaves: usize, parent: Vec<Option<usize>>, direction: Vec<i8>) -> Result<Self> {
        let mut paths = Vec::with_capacity(leaves);
        let mut codes = Vec::with_capacity(leaves);
        for leaf in 0..leaves {
            let mut path = Vec::new();
            let mut code = Vec::new();
            let mut node = leaf;
            while let Some(p) = parent[node] {
                path.push((p - leaves) as u32);
                code.push(direction[node]);
                node = p;
            }
            path.reverse();
            code.reverse();
            paths.push(path);
            codes.push(code);
        }
        Ok(Self {
            leaves,
            parent,
            direction,
            paths,
            codes,
        })
    }

    pub fn leaves(&self) -> usize {
        self.leaves
    }

    pub fn inner_node_count(&self) -> usize {
        self.leaves - 1
    }

    /// Root-first inner-node indices and branch directions for `action`.
    pub fn path_of(&self, action: usize) -> Result<(&[u32], &[i8])> {
        if action >= self.leaves {
            return Err(Error::UnknownAction {
                id: action,
                size: self.leaves,
            });
        }
        Ok((&self.paths[action], &self.codes[action]))
    }

    pub(crate) fn path(&self, action: usize) -> (&[u32], &[i8]) {
        (&self.paths[action], &self.codes[action])
    }

    pub fn parent_array(&self) -> &[Option<usize>] {
        &self.parent
    }

    pub fn direction_array(&self) -> &[i8] {
        &self.direction
    }

    pub fn max_depth(&self) -> usize {
        self.codes.iter().map(Vec::len).max().unwrap_or(0)
    }
}
