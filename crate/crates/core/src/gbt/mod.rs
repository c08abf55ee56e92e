//! Gradient-boosted regression trees with a second-order regularized
//! objective: per-leaf Newton steps with L1/L2 leaf penalties, a per-leaf
//! complexity penalty, exact greedy split enumeration, shrinkage, row and
//! column subsampling, and validation-based early stopping.

mod booster;
mod params;
mod split;
mod tree;

pub use booster::{DenseData, GbtModel, MODEL_FORMAT};
pub use params::{gradients, GbtHyperParams, Loss};
pub use split::{best_split, leaf_weight, midpoint, soft_threshold, split_gain, SplitCandidate, SplitParams};
pub use tree::{presort, RegressionTree, TreeGrower, TreeNode};
