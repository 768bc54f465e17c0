use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow_cart, RegressionTree, TreeParams};
use super::{check_training_data, Regressor};
use crate::error::{Error, Result};
use crate::preprocess::Dataset;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Candidate features per split; `None` means ⌈M/3⌉.
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
    pub cv_threshold: f64,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 200,
            features_per_split: None,
            bootstrap: true,
            cv_threshold: 0.0,
            max_depth: Some(16),
            min_samples_leaf: 2,
        }
    }
}

impl ForestParams {
    pub fn tree_params(&self) -> TreeParams {
        TreeParams {
            cv_threshold: self.cv_threshold,
            max_depth: self.max_depth,
            min_samples_leaf: self.min_samples_leaf,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    #[serde(skip)]
    pub params: ForestParams,
    /// Tree `i` draws from stream `i` of this seed.
    pub seed: u64,
    pub features_per_split: usize,
    pub n_trees: usize,
    pub trees: Vec<RegressionTree>,
}

impl Regressor for RandomForest {
    fn n_features(&self) -> usize {
        self.trees.first().map_or(0, |t| t.n_features)
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.root.evaluate(row)).sum();
        sum / self.trees.len() as f64
    }

    fn used_features(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self.trees.iter().flat_map(|t| t.used_features()).collect();
        f.sort_unstable();
        f.dedup();
        f
    }

    fn additive_terms(&self) -> Option<Vec<(f64, &dyn Regressor)>> {
        let w = 1.0 / self.trees.len() as f64;
        Some(
            self.trees
                .iter()
                .map(|t| (w, t as &dyn Regressor))
                .collect(),
        )
    }
}

/// Bagged variance-reduction trees. Each tree sees an n-row bootstrap sample
/// (when enabled) and considers a fresh uniform subset of features at every
/// split. Trees train in parallel; each owns its random stream, so the
/// result does not depend on scheduling.
pub fn fit_forest(train: &Dataset, params: &ForestParams, seed: u64) -> Result<RandomForest> {
    check_training_data(train)?;
    let tree_params = params.tree_params();
    tree_params.validate()?;
    if params.n_trees == 0 {
        return Err(Error::Param("n_trees must be >= 1".into()));
    }
    let m = train.n_features();
    let k = params.features_per_split.unwrap_or(m.div_ceil(3)).max(1);
    if k > m {
        return Err(Error::Param(format!(
            "features_per_split {k} exceeds the {m} available features"
        )));
    }
    let n = train.n_rows();

    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng::stream(seed, t as u64);
            let indices: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let mut sampler = |m: usize| -> Vec<usize> {
                if k == m {
                    (0..m).collect()
                } else {
                    let mut f = index::sample(&mut rng, m, k).into_vec();
                    f.sort_unstable();
                    f
                }
            };
            RegressionTree {
                n_features: m,
                root: grow_cart(train, indices, &tree_params, &mut sampler, 0),
            }
        })
        .collect();

    Ok(RandomForest {
        params: params.clone(),
        seed,
        features_per_split: k,
        n_trees: params.n_trees,
        trees,
    })
}
