//! Run configuration: TOML file, then command-line overrides, then defaults.
//!
//! ```toml
//! seed = 42
//! out_dir = "out"
//! test_fraction = 0.2
//! folds = 5
//! grids = "grids.json"
//! background_size = 100
//! explain_budget = 200
//! explain_model = "gbt"
//! buckets = ["2018", "2019", "2020", "2021-22"]
//! families = ["linear", "svr", "tree", "forest", "gbt"]
//!
//! [inputs]
//! html_dir = "pages"
//! rules = "rules.toml"
//! listings = "out/listings.csv"
//! ```
//!
//! Every `[inputs]` path except `html_dir` and `rules` defaults to a file in
//! `out_dir`, so commands chain without extra flags.

use std::fs;
use std::path::{Path, PathBuf};

use hedonic::dataset::YearBucket;
use hedonic::eval::{GridSpec, DEFAULT_FOLDS, DEFAULT_TEST_FRACTION};
use hedonic::explain::DEFAULT_BACKGROUND;
use hedonic::models::Family;
use hedonic::{Error, Result};
use serde::{Deserialize, Serialize};

pub const DEFAULT_EXPLAIN_BUDGET: usize = 200;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputPaths {
    pub html_dir: Option<PathBuf>,
    pub rules: Option<PathBuf>,
    pub listings: Option<PathBuf>,
    pub cleaned: Option<PathBuf>,
    pub results: Option<PathBuf>,
    pub correlation: Option<PathBuf>,
    pub shap: Option<PathBuf>,
    pub models_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    seed: Option<u64>,
    out_dir: Option<PathBuf>,
    test_fraction: Option<f64>,
    folds: Option<usize>,
    grids: Option<PathBuf>,
    background_size: Option<usize>,
    explain_budget: Option<usize>,
    explain_model: Option<String>,
    buckets: Option<Vec<String>>,
    families: Option<Vec<String>>,
    #[serde(default)]
    inputs: InputPaths,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub test_fraction: f64,
    pub folds: usize,
    pub grids: Option<PathBuf>,
    pub background_size: usize,
    pub explain_budget: usize,
    pub explain_model: Family,
    pub buckets: Vec<YearBucket>,
    pub families: Vec<Family>,
    pub inputs: InputPaths,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out_dir: PathBuf::from("out"),
            test_fraction: DEFAULT_TEST_FRACTION,
            folds: DEFAULT_FOLDS,
            grids: None,
            background_size: DEFAULT_BACKGROUND,
            explain_budget: DEFAULT_EXPLAIN_BUDGET,
            explain_model: Family::Gbt,
            buckets: YearBucket::ALL.to_vec(),
            families: Family::ALL.to_vec(),
            inputs: InputPaths::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ConfigFile =
            toml::from_str(text).map_err(|e| Error::Param(format!("config: {e}")))?;
        let mut cfg = RunConfig::default();
        if let Some(v) = file.seed {
            cfg.seed = v;
        }
        if let Some(v) = file.out_dir {
            cfg.out_dir = v;
        }
        if let Some(v) = file.test_fraction {
            cfg.test_fraction = v;
        }
        if let Some(v) = file.folds {
            cfg.folds = v;
        }
        cfg.grids = file.grids;
        if let Some(v) = file.background_size {
            cfg.background_size = v;
        }
        if let Some(v) = file.explain_budget {
            cfg.explain_budget = v;
        }
        if let Some(v) = file.explain_model {
            cfg.explain_model = v.parse()?;
        }
        if let Some(v) = file.buckets {
            cfg.buckets = v.iter().map(|b| b.parse()).collect::<Result<_>>()?;
        }
        if let Some(v) = file.families {
            cfg.families = v.iter().map(|f| f.parse()).collect::<Result<_>>()?;
        }
        cfg.inputs = file.inputs;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Param(format!(
                "test_fraction must lie in (0, 1), got {}",
                self.test_fraction
            )));
        }
        if self.folds < 2 {
            return Err(Error::Param("folds must be >= 2".into()));
        }
        if self.background_size == 0 {
            return Err(Error::Param("background_size must be >= 1".into()));
        }
        if self.buckets.is_empty() || self.families.is_empty() {
            return Err(Error::Param("at least one bucket and one model family are required".into()));
        }
        Ok(())
    }

    fn in_out(&self, given: &Option<PathBuf>, name: &str) -> PathBuf {
        given.clone().unwrap_or_else(|| self.out_dir.join(name))
    }

    pub fn listings_path(&self) -> PathBuf {
        self.in_out(&self.inputs.listings, "listings.csv")
    }

    pub fn cleaned_path(&self) -> PathBuf {
        self.in_out(&self.inputs.cleaned, "cleaned.csv")
    }

    pub fn results_path(&self) -> PathBuf {
        self.in_out(&self.inputs.results, "results.csv")
    }

    pub fn correlation_path(&self) -> PathBuf {
        self.in_out(&self.inputs.correlation, "correlation.csv")
    }

    pub fn shap_path(&self) -> PathBuf {
        self.in_out(&self.inputs.shap, "shap.csv")
    }

    pub fn models_dir(&self) -> PathBuf {
        self.in_out(&self.inputs.models_dir, "models")
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        match &self.grids {
            Some(p) => GridSpec::from_path(p),
            None => Ok(GridSpec::default()),
        }
    }

    /// Settings that shape outputs, recorded in manifests.
    pub fn settings(&self) -> serde_json::Value {
        serde_json::json!({
            "seed": self.seed,
            "test_fraction": self.test_fraction,
            "folds": self.folds,
            "grids": self.grids.as_ref().map(|p| p.display().to_string()),
            "background_size": self.background_size,
            "explain_budget": self.explain_budget,
            "explain_model": self.explain_model.name(),
            "buckets": self.buckets.iter().map(|b| b.label()).collect::<Vec<_>>(),
            "families": self.families.iter().map(|f| f.name()).collect::<Vec<_>>(),
        })
    }
}

/// Fails on the first path that does not exist.
pub fn require_existing(paths: &[&Path]) -> Result<()> {
    for p in paths {
        if !p.exists() {
            return Err(Error::io(
                *p,
                std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory"),
            ));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_values_and_defaults() {
        let cfg = RunConfig::from_toml_str(
            "seed = 9\nfamilies = [\"gbt\", \"linear\"]\n[inputs]\ncleaned = \"data/c.csv\"\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.families, vec![Family::Gbt, Family::Linear]);
        assert_eq!(cfg.cleaned_path(), PathBuf::from("data/c.csv"));
        assert_eq!(cfg.results_path(), PathBuf::from("out/results.csv"));
        assert_eq!(cfg.buckets.len(), 4);
    }

    #[test]
    fn rejects_unknown_keys_and_names() {
        assert!(RunConfig::from_toml_str("sed = 1").is_err());
        let err = RunConfig::from_toml_str("families = [\"xgb\"]").unwrap_err().to_string();
        assert!(err.contains("gbt"), "{err}");
        assert!(RunConfig::from_toml_str("test_fraction = 1.5").is_err());
        assert!(RunConfig::from_toml_str("buckets = [\"1999\"]").is_err());
    }

    #[test]
    fn missing_path_is_named() {
        let err = require_existing(&[Path::new("/definitely/not/here.csv")]).unwrap_err();
        assert_eq!(err.code(), "E_IO");
        assert!(err.to_string().contains("/definitely/not/here.csv"));
    }
}
