//! From-scratch regressors behind one fit/predict contract, with JSON
//! persistence.
//!
//! Persisted models are a single JSON document:
//!
//! ```text
//! { "schema_version": 1, "model_kind": "gbt", "params": {...}, "payload": {...} }
//! ```
//!
//! Trees inside a payload are nested `{feature, threshold, left, right}`
//! objects with `{leaf: value}` at the bottom.

mod forest;
mod gbt;
mod linear;
mod svr;
mod tree;

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::preprocess::Dataset;

pub use forest::{fit_forest, ForestParams, RandomForest};
pub use gbt::{fit_gbt, BoostedEnsemble, GbtParams};
pub use linear::{fit_linear, LinearModel, LinearParams};
pub use svr::{fit_svr, Kernel, KernelKind, SvrModel, SvrParams};
pub use tree::{fit_tree, DecisionTree, Node, RegressionTree, TreeParams};

pub const SCHEMA_VERSION: u32 = 1;

/// A fitted model that maps a feature row to a price.
pub trait Regressor: Sync {
    fn n_features(&self) -> usize;

    /// Prediction for a row already known to have `n_features` entries.
    fn predict_row(&self, row: &[f64]) -> f64;

    /// Feature indices the fitted model can respond to. Every other feature
    /// has no influence on any prediction.
    fn used_features(&self) -> Vec<usize> {
        (0..self.n_features()).collect()
    }

    /// Features whose value, swapped between `x` and `b` one at a time or in
    /// any combination, can change the prediction. Every other feature is a
    /// null player in a game between these two rows.
    fn relevant_features(&self, x: &[f64], b: &[f64]) -> Vec<usize> {
        self.used_features()
            .into_iter()
            .filter(|&j| x[j] != b[j])
            .collect()
    }

    /// Decomposition `f(x) = c + Σ weight·term(x)` for ensembles, when the
    /// model has one.
    fn additive_terms(&self) -> Option<Vec<(f64, &dyn Regressor)>> {
        None
    }

    fn predict(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.n_features() {
            return Err(Error::Dimension {
                expected: self.n_features(),
                got: row.len(),
            });
        }
        Ok(self.predict_row(row))
    }

    fn predict_all(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        rows.iter().map(|r| self.predict(r)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Linear,
    Svr,
    Tree,
    Forest,
    Gbt,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::Linear,
        Family::Svr,
        Family::Tree,
        Family::Forest,
        Family::Gbt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Linear => "linear",
            Family::Svr => "svr",
            Family::Tree => "tree",
            Family::Forest => "forest",
            Family::Gbt => "gbt",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Family::Linear => "Linear Regression",
            Family::Svr => "Support Vector Regression",
            Family::Tree => "Decision Tree Regression",
            Family::Forest => "Random Forest Regression",
            Family::Gbt => "Gradient Boosted Regression",
        }
    }

    pub fn default_params(self) -> HyperParams {
        match self {
            Family::Linear => HyperParams::Linear(LinearParams::default()),
            Family::Svr => HyperParams::Svr(SvrParams::default()),
            Family::Tree => HyperParams::Tree(TreeParams::default()),
            Family::Forest => HyperParams::Forest(ForestParams::default()),
            Family::Gbt => HyperParams::Gbt(GbtParams::default()),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| {
                let valid: Vec<&str> = Family::ALL.iter().map(|f| f.name()).collect();
                Error::Param(format!(
                    "unknown model {s:?}; valid names: {}",
                    valid.join(", ")
                ))
            })
    }
}

/// Family-specific hyperparameters. Parsing rejects unknown keys.
#[derive(Debug, Clone, PartialEq)]
pub enum HyperParams {
    Linear(LinearParams),
    Svr(SvrParams),
    Tree(TreeParams),
    Forest(ForestParams),
    Gbt(GbtParams),
}

impl HyperParams {
    pub fn family(&self) -> Family {
        match self {
            HyperParams::Linear(_) => Family::Linear,
            HyperParams::Svr(_) => Family::Svr,
            HyperParams::Tree(_) => Family::Tree,
            HyperParams::Forest(_) => Family::Forest,
            HyperParams::Gbt(_) => Family::Gbt,
        }
    }

    pub fn to_value(&self) -> Value {
        let v = match self {
            HyperParams::Linear(p) => serde_json::to_value(p),
            HyperParams::Svr(p) => serde_json::to_value(p),
            HyperParams::Tree(p) => serde_json::to_value(p),
            HyperParams::Forest(p) => serde_json::to_value(p),
            HyperParams::Gbt(p) => serde_json::to_value(p),
        };
        v.expect("params serialize to json")
    }

    pub fn from_value(family: Family, value: Value) -> Result<Self> {
        let wrap = |e: serde_json::Error| Error::Param(format!("{family} params: {e}"));
        Ok(match family {
            Family::Linear => HyperParams::Linear(serde_json::from_value(value).map_err(wrap)?),
            Family::Svr => HyperParams::Svr(serde_json::from_value(value).map_err(wrap)?),
            Family::Tree => HyperParams::Tree(serde_json::from_value(value).map_err(wrap)?),
            Family::Forest => HyperParams::Forest(serde_json::from_value(value).map_err(wrap)?),
            Family::Gbt => HyperParams::Gbt(serde_json::from_value(value).map_err(wrap)?),
        })
    }
}

impl fmt::Display for HyperParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_value())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Linear(LinearModel),
    Svr(SvrModel),
    Tree(DecisionTree),
    Forest(RandomForest),
    Gbt(BoostedEnsemble),
}

impl Model {
    /// Fits the family named by `params`. `seed` drives forest sampling;
    /// the other families are deterministic given their params.
    pub fn fit(params: &HyperParams, train: &Dataset, seed: u64) -> Result<Model> {
        Ok(match params {
            HyperParams::Linear(_) => Model::Linear(fit_linear(train)?),
            HyperParams::Svr(p) => Model::Svr(fit_svr(train, p)?),
            HyperParams::Tree(p) => Model::Tree(fit_tree(train, p)?),
            HyperParams::Forest(p) => Model::Forest(fit_forest(train, p, seed)?),
            HyperParams::Gbt(p) => Model::Gbt(fit_gbt(train, p)?),
        })
    }

    pub fn family(&self) -> Family {
        match self {
            Model::Linear(_) => Family::Linear,
            Model::Svr(_) => Family::Svr,
            Model::Tree(_) => Family::Tree,
            Model::Forest(_) => Family::Forest,
            Model::Gbt(_) => Family::Gbt,
        }
    }

    pub fn params(&self) -> HyperParams {
        match self {
            Model::Linear(_) => HyperParams::Linear(LinearParams::default()),
            Model::Svr(m) => HyperParams::Svr(m.params.clone()),
            Model::Tree(m) => HyperParams::Tree(m.params.clone()),
            Model::Forest(m) => HyperParams::Forest(m.params.clone()),
            Model::Gbt(m) => HyperParams::Gbt(m.params.clone()),
        }
    }

    fn inner(&self) -> &dyn Regressor {
        match self {
            Model::Linear(m) => m,
            Model::Svr(m) => m,
            Model::Tree(m) => m,
            Model::Forest(m) => m,
            Model::Gbt(m) => m,
        }
    }

    pub fn to_json(&self) -> String {
        let payload = match self {
            Model::Linear(m) => serde_json::to_value(m),
            Model::Svr(m) => serde_json::to_value(m),
            Model::Tree(m) => serde_json::to_value(m),
            Model::Forest(m) => serde_json::to_value(m),
            Model::Gbt(m) => serde_json::to_value(m),
        }
        .expect("model serializes to json");
        let doc = serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "model_kind": self.family().name(),
            "params": self.params().to_value(),
            "payload": payload,
        });
        serde_json::to_string(&doc).expect("json document serializes")
    }

    pub fn from_json(text: &str) -> Result<Model> {
        let doc: Value = serde_json::from_str(text)
            .map_err(|e| Error::ModelLoad(format!("malformed model document: {e}")))?;
        let version = doc.get("schema_version").and_then(Value::as_u64);
        if version != Some(u64::from(SCHEMA_VERSION)) {
            return Err(Error::ModelLoad(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                doc.get("schema_version").map_or("absent".to_string(), Value::to_string)
            )));
        }
        let kind = doc
            .get("model_kind")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::ModelLoad("model_kind missing".into()))?;
        let family: Family = kind
            .parse()
            .map_err(|_| Error::ModelLoad(format!("unknown model kind {kind:?}")))?;
        let params = HyperParams::from_value(
            family,
            doc.get("params").cloned().unwrap_or(Value::Object(Default::default())),
        )
        .map_err(|e| Error::ModelLoad(e.to_string()))?;
        let payload = doc
            .get("payload")
            .cloned()
            .ok_or_else(|| Error::ModelLoad("payload missing".into()))?;
        let bad = |e: serde_json::Error| Error::ModelLoad(format!("{kind} payload: {e}"));

        Ok(match params {
            HyperParams::Linear(_) => Model::Linear(serde_json::from_value(payload).map_err(bad)?),
            HyperParams::Svr(p) => {
                let mut m: SvrModel = serde_json::from_value(payload).map_err(bad)?;
                m.params = p;
                Model::Svr(m)
            }
            HyperParams::Tree(p) => {
                let mut m: DecisionTree = serde_json::from_value(payload).map_err(bad)?;
                m.params = p;
                Model::Tree(m)
            }
            HyperParams::Forest(p) => {
                let mut m: RandomForest = serde_json::from_value(payload).map_err(bad)?;
                m.params = p;
                Model::Forest(m)
            }
            HyperParams::Gbt(p) => {
                let mut m: BoostedEnsemble = serde_json::from_value(payload).map_err(bad)?;
                m.params = p;
                Model::Gbt(m)
            }
        })
    }
}

impl Regressor for Model {
    fn n_features(&self) -> usize {
        self.inner().n_features()
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        self.inner().predict_row(row)
    }

    fn used_features(&self) -> Vec<usize> {
        self.inner().used_features()
    }

    fn relevant_features(&self, x: &[f64], b: &[f64]) -> Vec<usize> {
        self.inner().relevant_features(x, b)
    }

    fn additive_terms(&self) -> Option<Vec<(f64, &dyn Regressor)>> {
        self.inner().additive_terms()
    }
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model.to_json()).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Model::from_json(&text)
}

pub(crate) fn check_training_data(train: &Dataset) -> Result<()> {
    if train.is_empty() {
        return Err(Error::Data("training set has no rows".into()));
    }
    train.check()
}
