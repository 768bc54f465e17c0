//! Exact Shapley attributions under an interventional value function.
//!
//! For a row `x` and background rows `b₁..b_B`, the value of a coalition `S`
//! is the mean prediction over composites that take `S` from `x` and the
//! remaining features from each `b`. Because this value is an average, the
//! Shapley vector is the average of the per-background games, and for an
//! ensemble `c + Σ wₜ·fₜ` it is the weighted sum of the per-term games. Each
//! small game is enumerated in full over the features that can actually
//! change its outcome; all others are null players and receive zero.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::index;
use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{format_number, YearBucket};
use crate::error::{Error, Result};
use crate::models::Regressor;
use crate::preprocess::Dataset;
use crate::rng;

/// Largest feature count accepted for enumeration.
pub const MAX_FEATURES: usize = 25;
pub const DEFAULT_BACKGROUND: usize = 100;

const BACKGROUND_STREAM: u64 = 2;
const ROW_STREAM: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShapExplanation {
    pub feature_names: Vec<String>,
    pub phi: Vec<f64>,
    /// Mean prediction over the background rows.
    pub base_value: f64,
    pub prediction: f64,
}

/// Shapley weights `s!(k−s−1)!/k!` for `s = 0..k`.
fn coalition_weights(k: usize) -> Vec<f64> {
    // 1 / (k · C(k−1, s)), with the binomial built up multiplicatively.
    let mut w = Vec::with_capacity(k);
    let mut binom = 1.0;
    for s in 0..k {
        w.push(1.0 / (k as f64 * binom));
        binom = binom * (k - 1 - s) as f64 / (s + 1) as f64;
    }
    w
}

#[derive(Default)]
struct Scratch {
    values: Vec<f64>,
    composite: Vec<f64>,
}

/// Adds `scale · φ(g)` to `phi`, where `g(S) = f(x_S, b_rest)`.
fn add_game(
    f: &dyn Regressor,
    x: &[f64],
    b: &[f64],
    scale: f64,
    phi: &mut [f64],
    scratch: &mut Scratch,
) {
    let players = f.relevant_features(x, b);
    let k = players.len();
    if k == 0 {
        return;
    }
    let size = 1usize << k;
    scratch.values.clear();
    scratch.values.reserve(size);
    for mask in 0..size {
        scratch.composite.clear();
        scratch.composite.extend_from_slice(b);
        for (bit, &j) in players.iter().enumerate() {
            if mask >> bit & 1 == 1 {
                scratch.composite[j] = x[j];
            }
        }
        scratch.values.push(f.predict_row(&scratch.composite));
    }

    let weights = coalition_weights(k);
    let values = &scratch.values;
    for (bit, &j) in players.iter().enumerate() {
        let with = 1usize << bit;
        let mut acc = 0.0;
        for mask in 0..size {
            if mask & with == 0 {
                let s = mask.count_ones() as usize;
                acc += weights[s] * (values[mask | with] - values[mask]);
            }
        }
        phi[j] += scale * acc;
    }
}

fn check_inputs(model: &dyn Regressor, background: &Dataset) -> Result<usize> {
    let m = model.n_features();
    if m > MAX_FEATURES {
        return Err(Error::TooManyFeatures {
            features: m,
            limit: MAX_FEATURES,
        });
    }
    if background.is_empty() {
        return Err(Error::Data("background sample is empty".into()));
    }
    if background.n_features() != m {
        return Err(Error::Dimension {
            expected: m,
            got: background.n_features(),
        });
    }
    Ok(m)
}

/// Exact Shapley values of `model` at `row` against `background`.
pub fn exact_shap(model: &dyn Regressor, row: &[f64], background: &Dataset) -> Result<ShapExplanation> {
    let m = check_inputs(model, background)?;
    let prediction = model.predict(row)?;
    let n_bg = background.n_rows() as f64;
    let base_value = background
        .rows
        .iter()
        .map(|b| model.predict_row(b))
        .sum::<f64>()
        / n_bg;

    let terms = model
        .additive_terms()
        .unwrap_or_else(|| vec![(1.0, model)]);
    let mut phi = vec![0.0; m];
    let mut scratch = Scratch::default();
    for (weight, term) in terms {
        for b in &background.rows {
            add_game(term, row, b, weight / n_bg, &mut phi, &mut scratch);
        }
    }
    Ok(ShapExplanation {
        feature_names: background.feature_names.clone(),
        phi,
        base_value,
        prediction,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShapSummary {
    pub feature_names: Vec<String>,
    pub explanations: Vec<ShapExplanation>,
    /// `pairs[j]` holds (feature value, attribution) for every explained row.
    pub pairs: Vec<Vec<(f64, f64)>>,
    pub mean_abs: Vec<f64>,
    pub ranking: Vec<String>,
}

impl ShapSummary {
    pub fn n_rows(&self) -> usize {
        self.explanations.len()
    }
}

/// Explains every row of `rows`, in parallel, and ranks the features.
pub fn shap_summary(model: &dyn Regressor, rows: &Dataset, background: &Dataset) -> Result<ShapSummary> {
    let m = check_inputs(model, background)?;
    let explanations = rows
        .rows
        .par_iter()
        .map(|r| exact_shap(model, r, background))
        .collect::<Result<Vec<_>>>()?;

    let mut pairs = vec![Vec::with_capacity(rows.n_rows()); m];
    for (row, e) in rows.rows.iter().zip(&explanations) {
        for j in 0..m {
            pairs[j].push((row[j], e.phi[j]));
        }
    }
    let mean_abs: Vec<f64> = pairs
        .iter()
        .map(|p| {
            if p.is_empty() {
                0.0
            } else {
                p.iter().map(|(_, phi)| phi.abs()).sum::<f64>() / p.len() as f64
            }
        })
        .collect();
    let feature_names = background.feature_names.clone();
    let ranking = rank_by_mean(&feature_names, &mean_abs);
    Ok(ShapSummary {
        feature_names,
        explanations,
        pairs,
        mean_abs,
        ranking,
    })
}

/// Names ordered by descending mean, ties alphabetical.
pub fn rank_by_mean(names: &[String], means: &[f64]) -> Vec<String> {
    let mut order: Vec<usize> = (0..names.len()).collect();
    order.sort_by(|&a, &b| {
        means[b]
            .total_cmp(&means[a])
            .then_with(|| names[a].cmp(&names[b]))
    });
    order.into_iter().map(|i| names[i].clone()).collect()
}

pub fn rank_importance(summary: &ShapSummary) -> Vec<String> {
    rank_by_mean(&summary.feature_names, &summary.mean_abs)
}

/// Up to `size` rows drawn without replacement, kept in dataset order.
pub fn sample_background(train: &Dataset, size: usize, seed: u64) -> Dataset {
    sample_rows(train, size, seed, BACKGROUND_STREAM)
}

/// Up to `budget` rows to explain, drawn like the background but from an
/// independent stream.
pub fn select_rows(ds: &Dataset, budget: usize, seed: u64) -> Dataset {
    sample_rows(ds, budget, seed, ROW_STREAM)
}

fn sample_rows(ds: &Dataset, size: usize, seed: u64, stream: u64) -> Dataset {
    let n = ds.n_rows();
    if size >= n {
        return ds.clone();
    }
    let mut idx = index::sample(&mut rng::stream(seed, stream), n, size).into_vec();
    idx.sort_unstable();
    ds.subset(&idx)
}

/// `bucket,row,feature,value,phi`, one line per explained row and feature.
pub fn write_shap_csv(summaries: &[(YearBucket, ShapSummary)], out: &mut dyn Write) -> std::io::Result<()> {
    writeln!(out, "bucket,row,feature,value,phi")?;
    for (bucket, s) in summaries {
        for i in 0..s.n_rows() {
            for (j, name) in s.feature_names.iter().enumerate() {
                let (value, phi) = s.pairs[j][i];
                writeln!(
                    out,
                    "{},{i},{name},{},{}",
                    bucket.label(),
                    format_number(value),
                    format_number(phi)
                )?;
            }
        }
    }
    Ok(())
}

/// `bucket,rank,feature,mean_abs_phi`, ranks starting at 1.
pub fn write_summary_csv(summaries: &[(YearBucket, ShapSummary)], out: &mut dyn Write) -> std::io::Result<()> {
    writeln!(out, "bucket,rank,feature,mean_abs_phi")?;
    for (bucket, s) in summaries {
        for (rank, name) in s.ranking.iter().enumerate() {
            let j = s.feature_names.iter().position(|n| n == name).unwrap_or(0);
            writeln!(
                out,
                "{},{},{name},{}",
                bucket.label(),
                rank + 1,
                format_number(s.mean_abs[j])
            )?;
        }
    }
    Ok(())
}

pub fn write_shap_files(
    summaries: &[(YearBucket, ShapSummary)],
    shap_path: impl AsRef<Path>,
    summary_path: impl AsRef<Path>,
) -> Result<()> {
    let shap_path = shap_path.as_ref();
    let mut buf = Vec::new();
    write_shap_csv(summaries, &mut buf).map_err(|e| Error::io(shap_path, e))?;
    fs::write(shap_path, buf).map_err(|e| Error::io(shap_path, e))?;
    let summary_path = summary_path.as_ref();
    let mut buf = Vec::new();
    write_summary_csv(summaries, &mut buf).map_err(|e| Error::io(summary_path, e))?;
    fs::write(summary_path, buf).map_err(|e| Error::io(summary_path, e))
}
