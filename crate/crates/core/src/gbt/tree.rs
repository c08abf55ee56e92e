//! Regression trees and the depth-first exact greedy grower.

use serde::{Deserialize, Serialize};

use super::split::{leaf_weight, scan_feature, NodeStats, SplitCandidate, SplitParams};
use crate::error::Result;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TreeNode<T> {
    Split {
        feature: usize,
        threshold: T,
        left: usize,
        right: usize,
        default_left: bool,
    },
    Leaf {
        weight: T,
    },
}

/// Arena-allocated binary tree; node 0 is the root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree<T> {
    nodes: Vec<TreeNode<T>>,
}

impl<T: Scalar> RegressionTree<T> {
    pub fn leaf(weight: T) -> Self {
        Self {
            nodes: vec![TreeNode::Leaf { weight }],
        }
    }

    pub fn from_nodes(nodes: Vec<TreeNode<T>>) -> Self {
        Self { nodes }
    }

    pub fn nodes(&self) -> &[TreeNode<T>] {
        &self.nodes
    }

    pub fn root(&self) -> &TreeNode<T> {
        &self.nodes[0]
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Leaf { .. }))
            .count()
    }

    pub fn depth(&self) -> usize {
        fn walk<T>(nodes: &[TreeNode<T>], i: usize) -> usize {
            match &nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaf_weights(&self) -> Vec<T> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                TreeNode::Leaf { weight } => Some(*weight),
                TreeNode::Split { .. } => None,
            })
            .collect()
    }

    /// Index of the leaf reached by a sample whose feature `j` is `value(j)`.
    /// NaN follows the node's default direction.
    #[inline]
    pub fn leaf_index_with(&self, value: impl Fn(usize) -> T) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf { .. } => return i,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    default_left,
                } => {
                    let x = value(*feature);
                    let go_left = if x.is_nan() { *default_left } else { x < *threshold };
                    i = if go_left { *left } else { *right };
                }
            }
        }
    }

    #[inline]
    pub fn predict_with(&self, value: impl Fn(usize) -> T) -> T {
        match &self.nodes[self.leaf_index_with(value)] {
            TreeNode::Leaf { weight } => *weight,
            TreeNode::Split { .. } => unreachable!("leaf_index_with stops at leaves"),
        }
    }

    #[inline]
    pub fn predict_row(&self, row: &[T]) -> T {
        self.predict_with(|j| row[j])
    }

    /// Recomputes every leaf weight for this structure from per-row
    /// gradients. Leaves that receive no rows keep their weight.
    pub fn refit_leaves(
        &mut self,
        columns: &[Vec<T>],
        grad: &[T],
        hess: &[T],
        lambda: T,
        alpha: T,
    ) -> Result<()> {
        let mut sums = vec![(T::zero(), T::zero(), false); self.nodes.len()];
        for r in 0..grad.len() {
            let leaf = self.leaf_index_with(|j| columns[j][r]);
            sums[leaf].0 += grad[r];
            sums[leaf].1 += hess[r];
            sums[leaf].2 = true;
        }
        for (node, (g, h, seen)) in self.nodes.iter_mut().zip(sums) {
            if let (TreeNode::Leaf { weight }, true) = (node, seen) {
                *weight = leaf_weight(g, h, lambda, alpha)?;
            }
        }
        Ok(())
    }
}

/// Rows of one node, kept sorted per sampled feature.
struct NodeRows {
    rows: Vec<u32>,
    /// `sorted[k]`: rows with a present value of `features[k]`, ascending.
    sorted: Vec<Vec<u32>>,
    /// `missing[k]`: rows whose value of `features[k]` is NaN.
    missing: Vec<Vec<u32>>,
}

/// Grows one tree depth-first on fixed gradients.
pub struct TreeGrower<'a, T> {
    columns: &'a [Vec<T>],
    grad: &'a [T],
    hess: &'a [T],
    features: &'a [usize],
    params: SplitParams<T>,
    max_depth: usize,
    nodes: Vec<TreeNode<T>>,
    go_left: Vec<bool>,
}

impl<'a, T: Scalar> TreeGrower<'a, T> {
    pub fn new(
        columns: &'a [Vec<T>],
        grad: &'a [T],
        hess: &'a [T],
        features: &'a [usize],
        params: SplitParams<T>,
        max_depth: usize,
    ) -> Self {
        Self {
            columns,
            grad,
            hess,
            features,
            params,
            max_depth,
            nodes: Vec::new(),
            go_left: vec![false; grad.len()],
        }
    }

    /// Grows from `rows`. `presorted[k]` is the full-data ascending order of
    /// `features[k]` (NaN rows excluded); it is filtered down to `rows`.
    pub fn grow(mut self, rows: &[u32], presorted: &[&[u32]]) -> Result<RegressionTree<T>> {
        let mut member = vec![false; self.grad.len()];
        for &r in rows {
            member[r as usize] = true;
        }
        let sorted = presorted
            .iter()
            .map(|order| order.iter().copied().filter(|&r| member[r as usize]).collect())
            .collect();
        let missing = self
            .features
            .iter()
            .map(|&f| {
                rows.iter()
                    .copied()
                    .filter(|&r| self.columns[f][r as usize].is_nan())
                    .collect()
            })
            .collect();
        let root = NodeRows {
            rows: rows.to_vec(),
            sorted,
            missing,
        };
        self.grow_node(root, 0)?;
        Ok(RegressionTree { nodes: self.nodes })
    }

    fn stats(&self, rows: &[u32]) -> NodeStats<T> {
        let mut s = NodeStats {
            grad: T::zero(),
            hess: T::zero(),
        };
        for &r in rows {
            s.grad += self.grad[r as usize];
            s.hess += self.hess[r as usize];
        }
        s
    }

    fn find_split(&self, node: &NodeRows, totals: NodeStats<T>) -> Option<SplitCandidate<T>> {
        let mut best: Option<SplitCandidate<T>> = None;
        for (k, &feature) in self.features.iter().enumerate() {
            let missing = self.stats(&node.missing[k]);
            if let Some(c) = scan_feature(
                feature,
                &self.columns[feature],
                &node.sorted[k],
                missing,
                !node.missing[k].is_empty(),
                self.grad,
                self.hess,
                totals,
                &self.params,
            ) {
                if best.is_none_or(|b| c.gain > b.gain) {
                    best = Some(c);
                }
            }
        }
        best.filter(|c| c.gain > T::zero())
    }

    fn grow_node(&mut self, node: NodeRows, depth: usize) -> Result<usize> {
        let index = self.nodes.len();
        let totals = self.stats(&node.rows);
        let split = if depth < self.max_depth && node.rows.len() >= 2 {
            self.find_split(&node, totals)
        } else {
            None
        };
        let Some(split) = split else {
            let weight = leaf_weight(totals.grad, totals.hess, self.params.lambda, self.params.alpha)?;
            self.nodes.push(TreeNode::Leaf { weight });
            return Ok(index);
        };

        // placeholder, patched once the children exist
        self.nodes.push(TreeNode::Leaf { weight: T::zero() });
        let columns = self.columns;
        let column = &columns[split.feature];
        for &r in &node.rows {
            let x = column[r as usize];
            self.go_left[r as usize] = if x.is_nan() { split.default_left } else { x < split.threshold };
        }
        let go_left = &self.go_left;
        let part = |list: Vec<u32>| -> (Vec<u32>, Vec<u32>) {
            list.into_iter().partition(|&r| go_left[r as usize])
        };
        let (l_rows, r_rows) = part(node.rows);
        let (mut l_sorted, mut r_sorted) = (Vec::new(), Vec::new());
        for list in node.sorted {
            let (a, b) = part(list);
            l_sorted.push(a);
            r_sorted.push(b);
        }
        let (mut l_missing, mut r_missing) = (Vec::new(), Vec::new());
        for list in node.missing {
            let (a, b) = part(list);
            l_missing.push(a);
            r_missing.push(b);
        }

        let left = self.grow_node(
            NodeRows {
                rows: l_rows,
                sorted: l_sorted,
                missing: l_missing,
            },
            depth + 1,
        )?;
        let right = self.grow_node(
            NodeRows {
                rows: r_rows,
                sorted: r_sorted,
                missing: r_missing,
            },
            depth + 1,
        )?;
        self.nodes[index] = TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
            default_left: split.default_left,
        };
        Ok(index)
    }
}

/// Ascending row order of a column with NaN rows dropped.
pub fn presort<T: Scalar>(column: &[T]) -> Vec<u32> {
    let mut order: Vec<u32> = (0..column.len() as u32)
        .filter(|&r| !column[r as usize].is_nan())
        .collect();
    order.sort_by(|&a, &b| column[a as usize].partial_cmp(&column[b as usize]).unwrap());
    order
}
