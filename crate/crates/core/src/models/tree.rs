use serde::{Deserialize, Serialize};

use super::{check_training_data, Regressor};
use crate::error::{Error, Result};
use crate::preprocess::Dataset;

/// Binary tree node. Rows with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
    Leaf {
        leaf: f64,
    },
}

impl Node {
    pub fn evaluate(&self, row: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                Node::Leaf { leaf } => return *leaf,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if row[*feature] <= *threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            Node::Leaf { .. } => 1,
            Node::Split { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// Features with at least one split that sends `x` and `b` different ways.
    fn collect_divergent(&self, x: &[f64], b: &[f64], out: &mut Vec<usize>) {
        if let Node::Split {
            feature,
            threshold,
            left,
            right,
        } = self
        {
            if (x[*feature] <= *threshold) != (b[*feature] <= *threshold) {
                out.push(*feature);
            }
            left.collect_divergent(x, b, out);
            right.collect_divergent(x, b, out);
        }
    }

    fn collect_features(&self, out: &mut Vec<usize>) {
        if let Node::Split {
            feature,
            left,
            right,
            ..
        } = self
        {
            out.push(*feature);
            left.collect_features(out);
            right.collect_features(out);
        }
    }
}

/// A fitted tree together with the width of the rows it expects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub n_features: usize,
    pub root: Node,
}

impl Regressor for RegressionTree {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        self.root.evaluate(row)
    }

    fn used_features(&self) -> Vec<usize> {
        let mut f = Vec::new();
        self.root.collect_features(&mut f);
        f.sort_unstable();
        f.dedup();
        f
    }

    fn relevant_features(&self, x: &[f64], b: &[f64]) -> Vec<usize> {
        let mut f = Vec::new();
        self.root.collect_divergent(x, b, &mut f);
        f.sort_unstable();
        f.dedup();
        f
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TreeParams {
    /// A node whose target std/|mean| falls below this becomes a leaf.
    pub cv_threshold: f64,
    /// `None` grows without a depth limit.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            cv_threshold: 0.10,
            max_depth: Some(12),
            min_samples_leaf: 5,
        }
    }
}

impl TreeParams {
    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.cv_threshold >= 0.0) {
            return Err(Error::Param("cv_threshold must be >= 0".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::Param("min_samples_leaf must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    #[serde(skip)]
    pub params: TreeParams,
    pub tree: RegressionTree,
}

impl Regressor for DecisionTree {
    fn n_features(&self) -> usize {
        self.tree.n_features
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        self.tree.predict_row(row)
    }

    fn used_features(&self) -> Vec<usize> {
        self.tree.used_features()
    }

    fn relevant_features(&self, x: &[f64], b: &[f64]) -> Vec<usize> {
        self.tree.relevant_features(x, b)
    }
}

pub fn fit_tree(train: &Dataset, params: &TreeParams) -> Result<DecisionTree> {
    check_training_data(train)?;
    params.validate()?;
    let indices: Vec<usize> = (0..train.n_rows()).collect();
    let m = train.n_features();
    let root = grow_cart(train, indices, params, &mut |_| (0..m).collect(), 0);
    Ok(DecisionTree {
        params: params.clone(),
        tree: RegressionTree {
            n_features: m,
            root,
        },
    })
}

#[derive(Debug)]
pub(crate) struct Split {
    pub feature: usize,
    pub threshold: f64,
    /// score(left) + score(right) - score(parent).
    pub improvement: f64,
    pub left: Vec<usize>,
    pub right: Vec<usize>,
}

/// Scans every candidate feature and every midpoint between consecutive
/// distinct values, scoring each side with `score(sum, count)` over
/// `values`. Children smaller than `min_child` are skipped. Returns the split
/// with the largest improvement; ties keep the earliest feature in
/// `features` and then the lowest threshold.
pub(crate) fn find_split(
    rows: &[Vec<f64>],
    values: &[f64],
    indices: &[usize],
    features: &[usize],
    min_child: usize,
    score: impl Fn(f64, usize) -> f64,
) -> Option<Split> {
    let n = indices.len();
    if n < 2 * min_child.max(1) {
        return None;
    }
    let total: f64 = indices.iter().map(|&i| values[i]).sum();
    let parent = score(total, n);

    let mut best: Option<(usize, f64, f64)> = None;
    let mut order = indices.to_vec();
    for &feature in features {
        order.sort_by(|&a, &b| rows[a][feature].total_cmp(&rows[b][feature]));
        let mut left_sum = 0.0;
        for k in 0..n - 1 {
            left_sum += values[order[k]];
            let lo = rows[order[k]][feature];
            let hi = rows[order[k + 1]][feature];
            let n_left = k + 1;
            if lo == hi || n_left < min_child || n - n_left < min_child {
                continue;
            }
            let improvement =
                score(left_sum, n_left) + score(total - left_sum, n - n_left) - parent;
            if best.is_none_or(|(_, _, b)| improvement > b) {
                let mut threshold = lo + (hi - lo) / 2.0;
                if threshold >= hi {
                    threshold = lo;
                }
                best = Some((feature, threshold, improvement));
            }
        }
    }

    let (feature, threshold, improvement) = best?;
    let (left, right) = indices
        .iter()
        .partition(|&&i| rows[i][feature] <= threshold);
    Some(Split {
        feature,
        threshold,
        improvement,
        left,
        right,
    })
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Grows a variance-reduction tree over `indices`. `features` picks the
/// candidate columns for each split.
pub(crate) fn grow_cart(
    train: &Dataset,
    indices: Vec<usize>,
    params: &TreeParams,
    features: &mut dyn FnMut(usize) -> Vec<usize>,
    depth: usize,
) -> Node {
    let (mean, std) = mean_std(indices.iter().map(|&i| train.target[i]));
    let leaf = Node::Leaf { leaf: mean };

    let cv_stop = mean != 0.0 && std / mean.abs() < params.cv_threshold;
    let depth_stop = params.max_depth.is_some_and(|d| depth >= d);
    if cv_stop || depth_stop || indices.len() < 2 * params.min_samples_leaf {
        return leaf;
    }

    // Centering at the node mean keeps the prefix sums small.
    let centered: Vec<f64> = train.target.iter().map(|y| y - mean).collect();
    let candidates = features(train.n_features());
    let split = find_split(
        &train.rows,
        &centered,
        &indices,
        &candidates,
        params.min_samples_leaf,
        |s, c| s * s / c as f64,
    );
    match split {
        Some(s) if s.improvement > 0.0 => Node::Split {
            feature: s.feature,
            threshold: s.threshold,
            left: Box::new(grow_cart(train, s.left, params, features, depth + 1)),
            right: Box::new(grow_cart(train, s.right, params, features, depth + 1)),
        },
        _ => leaf,
    }
}
