//! Held-out evaluation: seeded splits, the three error metrics, k-fold grid
//! search and the per-bucket results grid.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dataset::YearBucket;
use crate::error::{Error, Result};
use crate::models::{Family, HyperParams, Model, Regressor};
use crate::preprocess::Dataset;
use crate::rng;

pub const DEFAULT_TEST_FRACTION: f64 = 0.2;
pub const DEFAULT_FOLDS: usize = 5;

/// Default tuning grids, one entry per family.
pub const DEFAULT_GRIDS: &str = include_str!("../config/default_grids.json");

const SPLIT_STREAM: u64 = 0;
const FOLD_STREAM: u64 = 1;

/// Predictions next to the observed prices they estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationPair {
    predicted: Vec<f64>,
    actual: Vec<f64>,
}

impl EvaluationPair {
    pub fn new(predicted: Vec<f64>, actual: Vec<f64>) -> Result<Self> {
        if predicted.len() != actual.len() {
            return Err(Error::Dimension {
                expected: actual.len(),
                got: predicted.len(),
            });
        }
        if actual.is_empty() {
            return Err(Error::Data("evaluation needs at least one pair".into()));
        }
        Ok(EvaluationPair { predicted, actual })
    }

    pub fn predicted(&self) -> &[f64] {
        &self.predicted
    }

    pub fn actual(&self) -> &[f64] {
        &self.actual
    }

    pub fn len(&self) -> usize {
        self.actual.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actual.is_empty()
    }

    pub fn mean_actual(&self) -> f64 {
        self.actual.iter().sum::<f64>() / self.len() as f64
    }

    fn residuals(&self) -> impl Iterator<Item = f64> + '_ {
        self.actual.iter().zip(&self.predicted).map(|(y, x)| y - x)
    }
}

pub fn mae(pair: &EvaluationPair) -> f64 {
    pair.residuals().map(f64::abs).sum::<f64>() / pair.len() as f64
}

pub fn rmse(pair: &EvaluationPair) -> f64 {
    (pair.residuals().map(|r| r * r).sum::<f64>() / pair.len() as f64).sqrt()
}

/// `None` when every actual value is the same, where the ratio is 0/0.
pub fn r_squared(pair: &EvaluationPair) -> Option<f64> {
    let mean = pair.mean_actual();
    let ss_tot: f64 = pair.actual.iter().map(|y| (y - mean) * (y - mean)).sum();
    if pair.actual.iter().all(|&y| y == pair.actual[0]) || ss_tot == 0.0 {
        return None;
    }
    let ss_res: f64 = pair.residuals().map(|r| r * r).sum();
    Some(1.0 - ss_res / ss_tot)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub mae: f64,
    pub rmse: f64,
    /// `None` serializes as `null` and prints as `undefined`.
    pub r2: Option<f64>,
}

impl MetricSet {
    pub fn compute(pair: &EvaluationPair) -> Self {
        MetricSet {
            mae: mae(pair),
            rmse: rmse(pair),
            r2: r_squared(pair),
        }
    }

    pub fn r2_text(&self) -> String {
        match self.r2 {
            Some(v) => format!("{v:.4}"),
            None => "undefined".into(),
        }
    }
}

/// Number of training rows for a split: `n·(1 − f)` rounded half to even,
/// kept inside `1..=n-1`. The test set takes the rest, so 3 rows at 0.5
/// become 2 train and 1 test.
pub fn train_size(n: usize, test_fraction: f64) -> usize {
    let raw = (n as f64 * (1.0 - test_fraction)).round_ties_even() as usize;
    raw.clamp(1, n.saturating_sub(1).max(1))
}

/// Seeded shuffle split. Both halves keep the original row order.
pub fn train_test_split(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Param(format!(
            "test_fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let n = ds.n_rows();
    if n < 2 {
        return Err(Error::Data(format!("cannot split {n} rows into train and test")));
    }
    let (train, test) = split_indices(n, train_size(n, test_fraction), seed);
    Ok((ds.subset(&train), ds.subset(&test)))
}

fn split_indices(n: usize, n_train: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, SPLIT_STREAM));
    let mut train = order[..n_train].to_vec();
    let mut test = order[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Fold label for every row: a seeded shuffle dealt round-robin into `k`
/// folds, so fold sizes differ by at most one.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::Param(format!("need at least 2 folds, got {k}")));
    }
    if n < k {
        return Err(Error::Data(format!(
            "dataset too small for {k}-fold cross-validation: {n} rows"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, FOLD_STREAM));
    let mut folds = vec![0; n];
    for (pos, &row) in order.iter().enumerate() {
        folds[row] = pos % k;
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub best: HyperParams,
    /// Mean fold RMSE of `best`.
    pub cv_rmse: f64,
    /// Mean fold RMSE of every candidate, in grid order.
    pub scores: Vec<f64>,
}

/// Mean k-fold RMSE of one configuration.
pub fn cross_validate(params: &HyperParams, train: &Dataset, k: usize, seed: u64) -> Result<f64> {
    let folds = fold_assignment(train.n_rows(), k, seed)?;
    let mut total = 0.0;
    for fold in 0..k {
        let (fit_idx, hold_idx): (Vec<usize>, Vec<usize>) =
            (0..train.n_rows()).partition(|&i| folds[i] != fold);
        let model = Model::fit(params, &train.subset(&fit_idx), seed)?;
        let hold = train.subset(&hold_idx);
        let pair = EvaluationPair::new(model.predict_all(&hold.rows)?, hold.target)?;
        total += rmse(&pair);
    }
    Ok(total / k as f64)
}

/// Picks the candidate with the lowest mean fold RMSE. Only `train` is ever
/// seen; ties go to the earlier candidate.
pub fn grid_search(
    family: Family,
    grid: &[HyperParams],
    train: &Dataset,
    folds: usize,
    seed: u64,
) -> Result<GridResult> {
    if grid.is_empty() {
        return Err(Error::Param(format!("empty tuning grid for {family}")));
    }
    if let Some(p) = grid.iter().find(|p| p.family() != family) {
        return Err(Error::Param(format!(
            "{} params in the {family} grid",
            p.family()
        )));
    }
    fold_assignment(train.n_rows(), folds, seed)?;
    let scores = grid
        .par_iter()
        .map(|p| cross_validate(p, train, folds, seed))
        .collect::<Result<Vec<f64>>>()?;
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s < scores[best] {
            best = i;
        }
    }
    Ok(GridResult {
        best: grid[best].clone(),
        cv_rmse: scores[best],
        scores,
    })
}

/// Candidate configurations per family.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub grids: BTreeMap<Family, Vec<HyperParams>>,
}

impl GridSpec {
    /// Parses a grid document. Each family maps either to a list of
    /// parameter objects or to an object of value lists, which expands to
    /// the Cartesian product in key order with the last key varying fastest.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: BTreeMap<String, Value> = serde_json::from_str(text)
            .map_err(|e| Error::Param(format!("grid file: {e}")))?;
        let mut grids = BTreeMap::new();
        for (name, spec) in doc {
            let family: Family = name.parse()?;
            let configs = match spec {
                Value::Array(items) => items,
                Value::Object(axes) => expand_axes(&name, axes)?,
                other => {
                    return Err(Error::Param(format!(
                        "grid for {name} must be a list or an object, got {other}"
                    )))
                }
            };
            if configs.is_empty() {
                return Err(Error::Param(format!("empty tuning grid for {name}")));
            }
            let params = configs
                .into_iter()
                .map(|v| HyperParams::from_value(family, v))
                .collect::<Result<Vec<_>>>()?;
            grids.insert(family, params);
        }
        Ok(GridSpec { grids })
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// The grid for `family`, or its default params alone when absent.
    pub fn for_family(&self, family: Family) -> Vec<HyperParams> {
        self.grids
            .get(&family)
            .cloned()
            .unwrap_or_else(|| vec![family.default_params()])
    }

    pub fn to_value(&self) -> Value {
        let map: serde_json::Map<String, Value> = self
            .grids
            .iter()
            .map(|(f, ps)| {
                (
                    f.name().to_string(),
                    Value::Array(ps.iter().map(HyperParams::to_value).collect()),
                )
            })
            .collect();
        Value::Object(map)
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::from_json(DEFAULT_GRIDS).expect("bundled grids parse")
    }
}

fn expand_axes(name: &str, axes: serde_json::Map<String, Value>) -> Result<Vec<Value>> {
    let mut configs = vec![serde_json::Map::new()];
    for (key, values) in axes {
        let values = match values {
            Value::Array(v) if !v.is_empty() => v,
            _ => {
                return Err(Error::Param(format!(
                    "grid axis {name}.{key} must be a non-empty list"
                )))
            }
        };
        let mut next = Vec::with_capacity(configs.len() * values.len());
        for c in &configs {
            for v in &values {
                let mut c = c.clone();
                c.insert(key.clone(), v.clone());
                next.push(c);
            }
        }
        configs = next;
    }
    Ok(configs.into_iter().map(Value::Object).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub families: Vec<Family>,
    pub grids: GridSpec,
    pub test_fraction: f64,
    pub folds: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            families: Family::ALL.to_vec(),
            grids: GridSpec::default(),
            test_fraction: DEFAULT_TEST_FRACTION,
            folds: DEFAULT_FOLDS,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalCell {
    pub family: Family,
    pub bucket: YearBucket,
    pub metrics: MetricSet,
    pub params: Value,
    pub cv_rmse: f64,
    pub n_train: usize,
    pub n_test: usize,
}

/// Held-out metrics for every (family, bucket), family-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub seed: u64,
    pub test_fraction: f64,
    pub folds: usize,
    pub cells: Vec<EvalCell>,
}

impl EvalReport {
    pub fn cell(&self, family: Family, bucket: YearBucket) -> Option<&EvalCell> {
        self.cells
            .iter()
            .find(|c| c.family == family && c.bucket == bucket)
    }

    /// `model,year,rmse,mae,r_square`, one line per cell.
    pub fn write_csv(&self, out: &mut dyn Write) -> std::io::Result<()> {
        writeln!(out, "model,year,rmse,mae,r_square")?;
        for c in &self.cells {
            writeln!(
                out,
                "{},{},{:.2},{:.2},{}",
                c.family.name(),
                c.bucket.label(),
                c.metrics.rmse,
                c.metrics.mae,
                c.metrics.r2_text()
            )?;
        }
        Ok(())
    }

    pub fn write_csv_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut buf = Vec::new();
        self.write_csv(&mut buf).map_err(|e| Error::io(path, e))?;
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

/// A report together with the refitted model behind each cell and the split
/// used for it.
#[derive(Debug, Clone)]
pub struct EvalRun {
    pub report: EvalReport,
    pub models: BTreeMap<(Family, YearBucket), Model>,
    pub splits: BTreeMap<YearBucket, (Dataset, Dataset)>,
}

/// Splits each bucket once, then for every family tunes on the train part,
/// refits with the winner and scores on the test part.
pub fn run_evaluation(
    buckets: &BTreeMap<YearBucket, Dataset>,
    config: &EvalConfig,
) -> Result<EvalRun> {
    let mut splits = BTreeMap::new();
    for (&bucket, ds) in buckets {
        if ds.is_empty() {
            return Err(Error::Data(format!("bucket {} has no rows", bucket.label())));
        }
        splits.insert(bucket, train_test_split(ds, config.test_fraction, config.seed)?);
    }
    let jobs: Vec<(Family, YearBucket)> = config
        .families
        .iter()
        .flat_map(|&f| splits.keys().map(move |&b| (f, b)))
        .collect();

    let results = jobs
        .par_iter()
        .map(|&(family, bucket)| {
            let (train, test) = &splits[&bucket];
            let grid = config.grids.for_family(family);
            let tuned = grid_search(family, &grid, train, config.folds, config.seed)?;
            let model = Model::fit(&tuned.best, train, config.seed)?;
            let pair = EvaluationPair::new(model.predict_all(&test.rows)?, test.target.clone())?;
            let cell = EvalCell {
                family,
                bucket,
                metrics: MetricSet::compute(&pair),
                params: tuned.best.to_value(),
                cv_rmse: tuned.cv_rmse,
                n_train: train.n_rows(),
                n_test: test.n_rows(),
            };
            Ok((cell, model))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut cells = Vec::with_capacity(results.len());
    let mut models = BTreeMap::new();
    for (cell, model) in results {
        models.insert((cell.family, cell.bucket), model);
        cells.push(cell);
    }
    Ok(EvalRun {
        report: EvalReport {
            seed: config.seed,
            test_fraction: config.test_fraction,
            folds: config.folds,
            cells,
        },
        models,
        splits,
    })
}

pub fn evaluate_all(
    buckets: &BTreeMap<YearBucket, Dataset>,
    config: &EvalConfig,
) -> Result<EvalReport> {
    run_evaluation(buckets, config).map(|r| r.report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::TreeParams;

    fn pair(p: &[f64], a: &[f64]) -> EvaluationPair {
        EvaluationPair::new(p.to_vec(), a.to_vec()).unwrap()
    }

    #[test]
    fn metric_examples() {
        assert_eq!(mae(&pair(&[100.0, 200.0], &[110.0, 190.0])), 10.0);
        assert_eq!(mae(&pair(&[5.0], &[9.0])), 4.0);
        let r = rmse(&pair(&[0.0, 0.0], &[3.0, -4.0]));
        assert!((r - (12.5f64).sqrt()).abs() < 1e-12);
        assert_eq!(rmse(&pair(&[1.0, 2.0, 3.0], &[3.5, 4.5, 5.5])), 2.5);
        assert_eq!(r_squared(&pair(&[1.0, 2.0, 5.0], &[1.0, 2.0, 3.0])), Some(-1.0));
        assert_eq!(r_squared(&pair(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0])), Some(0.0));
        assert_eq!(r_squared(&pair(&[1.0, 2.0], &[1.0, 2.0])), Some(1.0));
    }

    #[test]
    fn constant_actuals_are_undefined() {
        let m = MetricSet::compute(&pair(&[1.0, 2.0], &[4.0, 4.0]));
        assert_eq!(m.r2, None);
        assert_eq!(m.r2_text(), "undefined");
        assert_eq!(r_squared(&pair(&[4.0], &[4.0])), None);
    }

    #[test]
    fn pair_rejects_bad_shapes() {
        assert!(EvaluationPair::new(vec![1.0], vec![1.0, 2.0]).is_err());
        assert!(EvaluationPair::new(vec![], vec![]).is_err());
    }

    fn numbered(n: usize) -> Dataset {
        let rows = (0..n).map(|i| vec![i as f64]).collect();
        let target = (0..n).map(|i| i as f64 * 2.0).collect();
        Dataset::from_matrix(rows, target).unwrap()
    }

    #[test]
    fn split_sizes() {
        let (tr, te) = train_test_split(&numbered(10), 0.2, 7).unwrap();
        assert_eq!((tr.n_rows(), te.n_rows()), (8, 2));
        let mut all: Vec<f64> = tr.rows.iter().chain(&te.rows).map(|r| r[0]).collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, (0..10).map(|i| i as f64).collect::<Vec<_>>());

        let (tr, te) = train_test_split(&numbered(3), 0.5, 1).unwrap();
        assert_eq!((tr.n_rows(), te.n_rows()), (2, 1));
        let (tr, te) = train_test_split(&numbered(2), 0.01, 1).unwrap();
        assert_eq!((tr.n_rows(), te.n_rows()), (1, 1));
        assert!(train_test_split(&numbered(1), 0.2, 1).is_err());
        assert!(train_test_split(&numbered(5), 1.0, 1).is_err());
    }

    #[test]
    fn split_is_seeded() {
        let a = train_test_split(&numbered(50), 0.2, 3).unwrap();
        let b = train_test_split(&numbered(50), 0.2, 3).unwrap();
        assert_eq!(a, b);
        let c = train_test_split(&numbered(50), 0.2, 4).unwrap();
        assert_ne!(a.1, c.1);
    }

    #[test]
    fn folds_are_balanced() {
        let f = fold_assignment(23, 5, 0).unwrap();
        let mut counts = [0; 5];
        for x in f {
            counts[x] += 1;
        }
        assert!(counts.iter().all(|&c| c == 4 || c == 5));
        assert!(fold_assignment(4, 5, 0).is_err());
    }

    fn tree(depth: Option<usize>) -> HyperParams {
        HyperParams::Tree(TreeParams {
            cv_threshold: 0.0,
            max_depth: depth,
            min_samples_leaf: 1,
        })
    }

    #[test]
    fn deeper_tree_wins_on_staircase() {
        let rows: Vec<Vec<f64>> = (0..60).map(|i| vec![(i % 30) as f64]).collect();
        let target = rows.iter().map(|r| (r[0] / 10.0).floor() * 100.0).collect();
        let ds = Dataset::from_matrix(rows, target).unwrap();
        let grid = vec![tree(Some(1)), tree(None)];
        let res = grid_search(Family::Tree, &grid, &ds, 5, 0).unwrap();
        assert_eq!(res.best, tree(None));
        assert!(res.scores[1] < res.scores[0]);
    }

    #[test]
    fn ties_keep_first() {
        let ds = numbered(20);
        let grid = vec![tree(Some(2)), tree(Some(2))];
        let res = grid_search(Family::Tree, &grid, &ds, 5, 0).unwrap();
        assert_eq!(res.scores[0], res.scores[1]);
        assert_eq!(res.best, grid[0]);
        assert!(grid_search(Family::Tree, &[], &ds, 5, 0).is_err());
        assert!(grid_search(Family::Linear, &grid, &ds, 5, 0).is_err());
        assert!(grid_search(Family::Tree, &grid, &numbered(3), 5, 0).is_err());
    }

    #[test]
    fn grid_expansion_order() {
        let g = GridSpec::from_json(r#"{"tree": {"max_depth": [1, 2], "min_samples_leaf": [3, 4]}}"#)
            .unwrap();
        let got: Vec<(Option<usize>, usize)> = g.grids[&Family::Tree]
            .iter()
            .map(|p| match p {
                HyperParams::Tree(t) => (t.max_depth, t.min_samples_leaf),
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(got, vec![(Some(1), 3), (Some(1), 4), (Some(2), 3), (Some(2), 4)]);
        assert!(GridSpec::from_json(r#"{"tree": {"depth": [1]}}"#).is_err());
        assert!(GridSpec::from_json(r#"{"boost": [{}]}"#).is_err());
        assert_eq!(g.for_family(Family::Gbt), vec![Family::Gbt.default_params()]);
    }

    #[test]
    fn bundled_grids_cover_every_family() {
        let g = GridSpec::default();
        for f in Family::ALL {
            assert!(!g.grids[&f].is_empty(), "{f}");
        }
    }

    #[test]
    fn linear_cell_on_noiseless_data() {
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64, (i * i % 7) as f64]).collect();
        let target = rows.iter().map(|r| 3.0 * r[0] - 2.0 * r[1] + 5.0).collect();
        let ds = Dataset::from_matrix(rows, target).unwrap();
        let buckets = BTreeMap::from([(YearBucket::Y2019, ds)]);
        let config = EvalConfig {
            families: vec![Family::Linear],
            ..Default::default()
        };
        let report = evaluate_all(&buckets, &config).unwrap();
        let cell = report.cell(Family::Linear, YearBucket::Y2019).unwrap();
        assert!((cell.metrics.r2.unwrap() - 1.0).abs() < 1e-12);
        assert!(cell.metrics.mae < 1e-9 && cell.metrics.rmse < 1e-9);
        assert_eq!((cell.n_train, cell.n_test), (24, 6));

        let mut csv = Vec::new();
        report.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("model,year,rmse,mae,r_square\nlinear,2019,0.00,0.00,1.0000\n"));
    }
}
