use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::tree::{find_split, Node, RegressionTree};
use super::{check_training_data, Regressor};
use crate::error::{Error, Result};
use crate::preprocess::Dataset;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GbtParams {
    pub n_rounds: usize,
    pub learning_rate: f64,
    /// L2 penalty on leaf weights.
    pub lambda: f64,
    /// Minimum gain for a split to be kept.
    pub gamma: f64,
    pub max_depth: Option<usize>,
    /// Minimum hessian sum (row count, for squared loss) in each child.
    pub min_child_weight: f64,
    /// Fraction of rows drawn without replacement for each round.
    pub subsample: f64,
    pub seed: u64,
}

impl Default for GbtParams {
    fn default() -> Self {
        GbtParams {
            n_rounds: 300,
            learning_rate: 0.1,
            lambda: 1.0,
            gamma: 0.0,
            max_depth: Some(6),
            min_child_weight: 1.0,
            subsample: 1.0,
            seed: 0,
        }
    }
}

impl GbtParams {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::Param("learning_rate must lie in (0, 1]".into()));
        }
        if !(self.lambda >= 0.0) || !(self.gamma >= 0.0) {
            return Err(Error::Param("lambda and gamma must be >= 0".into()));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::Param("subsample must lie in (0, 1]".into()));
        }
        if !(self.min_child_weight >= 0.0) {
            return Err(Error::Param("min_child_weight must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedEnsemble {
    #[serde(skip)]
    pub params: GbtParams,
    pub n_features: usize,
    pub base_score: f64,
    pub learning_rate: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub n_rounds: usize,
    pub trees: Vec<RegressionTree>,
}

impl BoostedEnsemble {
    /// Prediction using only the first `rounds` trees.
    pub fn predict_rounds(&self, row: &[f64], rounds: usize) -> f64 {
        let sum: f64 = self.trees[..rounds.min(self.trees.len())]
            .iter()
            .map(|t| t.root.evaluate(row))
            .sum();
        self.base_score + self.learning_rate * sum
    }
}

impl Regressor for BoostedEnsemble {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        self.predict_rounds(row, self.trees.len())
    }

    fn used_features(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self.trees.iter().flat_map(|t| t.used_features()).collect();
        f.sort_unstable();
        f.dedup();
        f
    }

    fn additive_terms(&self) -> Option<Vec<(f64, &dyn Regressor)>> {
        Some(
            self.trees
                .iter()
                .map(|t| (self.learning_rate, t as &dyn Regressor))
                .collect(),
        )
    }
}

struct Grower<'a> {
    rows: &'a [Vec<f64>],
    grad: Vec<f64>,
    params: &'a GbtParams,
    features: Vec<usize>,
    min_child: usize,
}

impl Grower<'_> {
    fn leaf(&self, indices: &[usize]) -> Node {
        let g: f64 = indices.iter().map(|&i| self.grad[i]).sum();
        Node::Leaf {
            leaf: -g / (indices.len() as f64 + self.params.lambda),
        }
    }

    fn grow(&self, indices: Vec<usize>, depth: usize) -> Node {
        if self.params.max_depth.is_some_and(|d| depth >= d) {
            return self.leaf(&indices);
        }
        let lambda = self.params.lambda;
        let split = find_split(
            self.rows,
            &self.grad,
            &indices,
            &self.features,
            self.min_child,
            |g, h| g * g / (h as f64 + lambda),
        );
        match split {
            Some(s) if 0.5 * s.improvement - self.params.gamma > 0.0 => Node::Split {
                feature: s.feature,
                threshold: s.threshold,
                left: Box::new(self.grow(s.left, depth + 1)),
                right: Box::new(self.grow(s.right, depth + 1)),
            },
            _ => self.leaf(&indices),
        }
    }
}

/// Second-order boosting on squared error. With squared loss every hessian
/// is 1, so a node's hessian sum is its row count. Split gain is
/// `½[G_L²/(H_L+λ) + G_R²/(H_R+λ) − G²/(H+λ)] − γ` and a leaf holds
/// `−G/(H+λ)`.
pub fn fit_gbt(train: &Dataset, params: &GbtParams) -> Result<BoostedEnsemble> {
    check_training_data(train)?;
    params.validate()?;
    let n = train.n_rows();
    let m = train.n_features();
    let base_score = train.target.iter().sum::<f64>() / n as f64;
    let mut pred = vec![base_score; n];
    let mut trees = Vec::with_capacity(params.n_rounds);
    let sample_size = ((n as f64 * params.subsample).round() as usize).clamp(1, n);

    for round in 0..params.n_rounds {
        let grad: Vec<f64> = pred.iter().zip(&train.target).map(|(p, y)| p - y).collect();
        let indices: Vec<usize> = if sample_size < n {
            let mut rng = rng::stream(params.seed, round as u64);
            let mut idx = index::sample(&mut rng, n, sample_size).into_vec();
            idx.sort_unstable();
            idx
        } else {
            (0..n).collect()
        };
        let grower = Grower {
            rows: &train.rows,
            grad,
            params,
            features: (0..m).collect(),
            min_child: (params.min_child_weight.ceil() as usize).max(1),
        };
        let root = grower.grow(indices, 0);
        for (p, row) in pred.iter_mut().zip(&train.rows) {
            *p += params.learning_rate * root.evaluate(row);
        }
        trees.push(RegressionTree {
            n_features: m,
            root,
        });
    }

    Ok(BoostedEnsemble {
        params: params.clone(),
        n_features: m,
        base_score,
        learning_rate: params.learning_rate,
        lambda: params.lambda,
        gamma: params.gamma,
        n_rounds: params.n_rounds,
        trees,
    })
}
