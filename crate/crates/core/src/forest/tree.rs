use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::data::Samples;
use super::split::best_split_with_min_leaf;
use crate::error::{Error, Result};

/// A decision-tree node. Serializes as `{"split":{"f","theta","left","right"}}`
/// or `{"leaf":[counts]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TreeNode {
    Split {
        #[serde(rename = "f")]
        feature: usize,
        #[serde(rename = "theta")]
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf(Vec<u64>),
}

impl TreeNode {
    /// Number of node levels on the longest root-to-leaf path (a lone leaf is 1).
    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf(_) => 1,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            TreeNode::Leaf(_) => 1,
            TreeNode::Split { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }

    /// Routes a sample to its leaf histogram.
    #[inline]
    pub fn leaf_for(&self, value: impl Fn(usize) -> f64) -> &[u64] {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf(counts) => return counts,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if value(*feature) < *threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    pub(crate) fn validate(&self, class_count: usize, feature_count: usize) -> Result<()> {
        match self {
            TreeNode::Leaf(counts) => {
                if counts.len() != class_count {
                    return Err(Error::MalformedModel(format!(
                        "leaf has {} classes, expected {class_count}",
                        counts.len()
                    )));
                }
                if counts.iter().all(|&c| c == 0) {
                    return Err(Error::MalformedModel("empty leaf histogram".into()));
                }
                Ok(())
            }
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if *feature >= feature_count {
                    return Err(Error::MalformedModel(format!(
                        "split feature {feature} out of range {feature_count}"
                    )));
                }
                if !threshold.is_finite() {
                    return Err(Error::MalformedModel("non-finite threshold".into()));
                }
                left.validate(class_count, feature_count)?;
                right.validate(class_count, feature_count)
            }
        }
    }
}

/// Growth limits for one tree.
#[derive(Debug, Clone, Copy)]
pub struct GrowParams {
    pub max_depth: usize,
    pub features_per_node: usize,
    pub min_samples_leaf: usize,
}

/// Grows a tree over `indices` (duplicates allowed, as produced by bootstrap).
///
/// Each internal node draws `features_per_node` distinct feature indices from
/// `rng` and keeps the best split among them. A node becomes a leaf at
/// `max_depth`, when it holds fewer than `2 * min_samples_leaf` samples, or
/// when no drawn feature yields positive gain. Nodes are expanded depth-first,
/// left before right, so the random stream is consumed in a fixed order.
pub fn grow<S: Samples + ?Sized, R: Rng>(
    samples: &S,
    indices: &[usize],
    params: &GrowParams,
    rng: &mut R,
) -> Result<TreeNode> {
    if indices.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot grow a tree from zero samples".into(),
        ));
    }
    let n_features = samples.feature_count();
    if params.features_per_node == 0 || params.features_per_node > n_features {
        return Err(Error::InvalidArgument(format!(
            "features_per_node {} outside 1..={n_features}",
            params.features_per_node
        )));
    }
    if params.max_depth == 0 {
        return Err(Error::InvalidArgument(
            "max_depth must be at least 1".into(),
        ));
    }
    grow_node(samples, indices, params, rng, 1)
}

fn histogram<S: Samples + ?Sized>(samples: &S, indices: &[usize]) -> Vec<u64> {
    let mut counts = vec![0u64; samples.class_count()];
    for &i in indices {
        counts[samples.label(i)] += 1;
    }
    counts
}

fn grow_node<S: Samples + ?Sized, R: Rng>(
    samples: &S,
    indices: &[usize],
    params: &GrowParams,
    rng: &mut R,
    depth: usize,
) -> Result<TreeNode> {
    let counts = histogram(samples, indices);
    let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
    if depth >= params.max_depth || indices.len() < 2 * params.min_samples_leaf.max(1) || pure {
        return Ok(TreeNode::Leaf(counts));
    }
    let mut features =
        index::sample(rng, samples.feature_count(), params.features_per_node).into_vec();
    features.sort_unstable();
    let Some(split) =
        best_split_with_min_leaf(samples, indices, &features, params.min_samples_leaf)?
    else {
        return Ok(TreeNode::Leaf(counts));
    };
    // Stable partition keeps the child index order independent of the split scan.
    let (left, right): (Vec<usize>, Vec<usize>) = indices
        .iter()
        .partition(|&&i| samples.value(i, split.feature) < split.threshold);
    debug_assert!(!left.is_empty() && !right.is_empty());
    let left_node = grow_node(samples, &left, params, rng, depth + 1)?;
    let right_node = grow_node(samples, &right, params, rng, depth + 1)?;
    Ok(TreeNode::Split {
        feature: split.feature,
        threshold: split.threshold,
        left: Box::new(left_node),
        right: Box::new(right_node),
    })
}
