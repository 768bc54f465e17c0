//! Independent reference implementations and fixture builders shared by the
//! property and acceptance suites. Nothing here calls into the code under
//! test except to fit models and read their predictions.

#![allow(dead_code)]

use hedonic::models::{
    fit_forest, fit_gbt, fit_linear, fit_svr, fit_tree, ForestParams, GbtParams, KernelKind,
    Model, Node, Regressor, SvrParams, TreeParams,
};
use hedonic::preprocess::Dataset;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------- metrics

pub fn brute_mae(pred: &[f64], actual: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..pred.len() {
        total += (actual[i] - pred[i]).abs();
    }
    total / pred.len() as f64
}

pub fn brute_rmse(pred: &[f64], actual: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..pred.len() {
        let d = actual[i] - pred[i];
        total += d * d;
    }
    (total / pred.len() as f64).sqrt()
}

pub fn brute_r2(pred: &[f64], actual: &[f64]) -> Option<f64> {
    let n = actual.len() as f64;
    let mean = actual.iter().sum::<f64>() / n;
    let mut ss_tot = 0.0;
    let mut ss_res = 0.0;
    for i in 0..actual.len() {
        ss_tot += (actual[i] - mean).powi(2);
        ss_res += (actual[i] - pred[i]).powi(2);
    }
    if actual.iter().all(|a| *a == actual[0]) {
        None
    } else {
        Some(1.0 - ss_res / ss_tot)
    }
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

// ---------------------------------------------------------------- shapley

/// Coalition value `mean_b f(x_S, b_rest)` for every subset mask.
fn coalition_values(f: &dyn Fn(&[f64]) -> f64, x: &[f64], background: &[Vec<f64>]) -> Vec<f64> {
    let m = x.len();
    (0..1usize << m)
        .map(|mask| {
            let mut total = 0.0;
            for b in background {
                let z: Vec<f64> = (0..m)
                    .map(|j| if mask >> j & 1 == 1 { x[j] } else { b[j] })
                    .collect();
                total += f(&z);
            }
            total / background.len() as f64
        })
        .collect()
}

/// Shapley values as the average marginal contribution over all `M!`
/// feature orderings (Heap's algorithm).
pub fn permutation_shapley(
    f: &dyn Fn(&[f64]) -> f64,
    x: &[f64],
    background: &[Vec<f64>],
) -> Vec<f64> {
    let m = x.len();
    assert!(m <= 9, "permutation oracle is for small M");
    let v = coalition_values(f, x, background);
    let mut phi = vec![0.0; m];
    let mut perm: Vec<usize> = (0..m).collect();
    let mut count = 0.0;
    let visit = |perm: &[usize], phi: &mut [f64]| {
        let mut mask = 0usize;
        for &j in perm {
            let next = mask | 1 << j;
            phi[j] += v[next] - v[mask];
            mask = next;
        }
    };
    let mut c = vec![0usize; m];
    visit(&perm, &mut phi);
    count += 1.0;
    let mut i = 0;
    while i < m {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            visit(&perm, &mut phi);
            count += 1.0;
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    phi.iter().map(|p| p / count).collect()
}

/// Prediction function minus one feature: the input at `dummy` is replaced
/// by 0 before calling the model.
pub struct IgnoreFeature<'a> {
    pub inner: &'a dyn Regressor,
    pub dummy: usize,
}

impl Regressor for IgnoreFeature<'_> {
    fn n_features(&self) -> usize {
        self.inner.n_features()
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        let mut z = row.to_vec();
        z[self.dummy] = 0.0;
        self.inner.predict_row(&z)
    }
}

/// `g(z) + g(z with features i and j swapped)`, symmetric in `i` and `j`.
pub struct Symmetrized<'a> {
    pub inner: &'a dyn Regressor,
    pub i: usize,
    pub j: usize,
}

impl Regressor for Symmetrized<'_> {
    fn n_features(&self) -> usize {
        self.inner.n_features()
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        let mut z = row.to_vec();
        z.swap(self.i, self.j);
        self.inner.predict_row(row) + self.inner.predict_row(&z)
    }
}

/// Pointwise sum of two models.
pub struct Sum<'a>(pub &'a dyn Regressor, pub &'a dyn Regressor);

impl Regressor for Sum<'_> {
    fn n_features(&self) -> usize {
        self.0.n_features()
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        self.0.predict_row(row) + self.1.predict_row(row)
    }
}

// ---------------------------------------------------------------- least squares

/// OLS with intercept by the normal equations `[1 X]ᵀ[1 X] β = [1 X]ᵀ y`,
/// solved by Gaussian elimination with partial pivoting. Returns
/// `(coefficients, intercept)`.
pub fn normal_equations(rows: &[Vec<f64>], y: &[f64]) -> (Vec<f64>, f64) {
    let m = rows[0].len();
    let p = m + 1;
    let design = |i: usize, k: usize| if k == 0 { 1.0 } else { rows[i][k - 1] };
    let mut a = vec![vec![0.0; p + 1]; p];
    for i in 0..rows.len() {
        for r in 0..p {
            for c in 0..p {
                a[r][c] += design(i, r) * design(i, c);
            }
            a[r][p] += design(i, r) * y[i];
        }
    }
    for col in 0..p {
        let pivot = (col..p)
            .max_by(|&u, &v| a[u][col].abs().total_cmp(&a[v][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        for r in 0..p {
            if r != col {
                let factor = a[r][col] / a[col][col];
                for c in col..=p {
                    a[r][c] -= factor * a[col][c];
                }
            }
        }
    }
    let beta: Vec<f64> = (0..p).map(|r| a[r][p] / a[r][r]).collect();
    (beta[1..].to_vec(), beta[0])
}

// ---------------------------------------------------------------- tree splits

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    /// Sum of squared deviations from the child means, both children.
    pub sse: f64,
}

fn sse(values: &[f64]) -> f64 {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|v| (v - mean).powi(2)).sum()
}

/// Every `(feature, midpoint)` split of the rows in `indices` whose children
/// both hold at least `min_leaf` rows, scored by direct two-pass SSE.
pub fn all_splits(
    rows: &[Vec<f64>],
    y: &[f64],
    indices: &[usize],
    min_leaf: usize,
) -> Vec<SplitChoice> {
    let m = rows[indices[0]].len();
    let mut out = Vec::new();
    for feature in 0..m {
        let mut values: Vec<f64> = indices.iter().map(|&i| rows[i][feature]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let threshold = (w[0] + w[1]) / 2.0;
            let (left, right): (Vec<usize>, Vec<usize>) =
                indices.iter().partition(|&&i| rows[i][feature] <= threshold);
            if left.len() < min_leaf || right.len() < min_leaf {
                continue;
            }
            let yl: Vec<f64> = left.iter().map(|&i| y[i]).collect();
            let yr: Vec<f64> = right.iter().map(|&i| y[i]).collect();
            out.push(SplitChoice {
                feature,
                threshold,
                sse: sse(&yl) + sse(&yr),
            });
        }
    }
    out
}

pub fn parent_sse(y: &[f64], indices: &[usize]) -> f64 {
    let v: Vec<f64> = indices.iter().map(|&i| y[i]).collect();
    sse(&v)
}

/// Checks every internal node of `node` against the exhaustive scan over
/// the rows that reach it.
pub fn check_tree(node: &Node, ds: &Dataset, indices: &[usize], min_leaf: usize) -> Result<(), String> {
    let Node::Split { feature, threshold, left, right } = node else {
        return Ok(());
    };
    let candidates = all_splits(&ds.rows, &ds.target, indices, min_leaf);
    let best = candidates
        .iter()
        .map(|c| c.sse)
        .fold(f64::INFINITY, f64::min);
    let parent = parent_sse(&ds.target, indices);
    let chosen = candidates
        .iter()
        .find(|c| c.feature == *feature && c.threshold == *threshold)
        .ok_or_else(|| format!("split x{feature} <= {threshold} is not a valid candidate"))?;
    let scale = parent.max(1e-9);
    if chosen.sse > best + 1e-9 * scale {
        return Err(format!("chose sse {} but {} is reachable", chosen.sse, best));
    }
    let winners: Vec<_> = candidates
        .iter()
        .filter(|c| c.sse <= best + 1e-9 * scale)
        .collect();
    if winners.len() == 1 && (winners[0].feature, winners[0].threshold) != (*feature, *threshold) {
        return Err("unique optimum not chosen".into());
    }
    let (l, r): (Vec<usize>, Vec<usize>) = indices
        .iter()
        .partition(|&&i| ds.rows[i][*feature] <= *threshold);
    check_tree(left, ds, &l, min_leaf)?;
    check_tree(right, ds, &r, min_leaf)
}

// ---------------------------------------------------------------- svr dual

pub fn kernel_value(kind: KernelKind, gamma: f64, degree: u32, coef0: f64, a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut dist = 0.0;
    for k in 0..a.len() {
        dot += a[k] * b[k];
        dist += (a[k] - b[k]) * (a[k] - b[k]);
    }
    match kind {
        KernelKind::Linear => dot,
        KernelKind::Rbf => (-gamma * dist).exp(),
        KernelKind::Polynomial => (gamma * dot + coef0).powi(degree as i32),
    }
}

/// Objective `½ aᵀQa + pᵀa` of the doubled epsilon-SVR dual.
pub fn svr_dual_objective(k: &[Vec<f64>], y: &[f64], eps: f64, a: &[f64]) -> f64 {
    let n = y.len();
    let beta: Vec<f64> = (0..n).map(|i| a[i] - a[n + i]).collect();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += beta[i] * beta[j] * k[i][j];
        }
    }
    let mut lin = 0.0;
    for i in 0..n {
        lin += eps * (a[i] + a[n + i]) - y[i] * beta[i];
    }
    0.5 * quad + lin
}

/// Euclidean projection onto `{0 ≤ a ≤ c, Σ aᵢ − Σ a*ᵢ = 0}` by bisection on
/// the multiplier of the equality constraint.
fn project(v: &[f64], n: usize, c: f64) -> Vec<f64> {
    let sign = |t: usize| if t < n { 1.0 } else { -1.0 };
    let at = |mu: f64| -> Vec<f64> {
        (0..v.len())
            .map(|t| (v[t] - mu * sign(t)).clamp(0.0, c))
            .collect()
    };
    let h = |mu: f64| -> f64 { at(mu).iter().enumerate().map(|(t, a)| sign(t) * a).sum() };
    let span = v.iter().fold(0.0f64, |acc, x| acc.max(x.abs())) + c + 1.0;
    let (mut lo, mut hi) = (-span, span);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// Accelerated projected gradient on the doubled dual, with restarts, run
/// until the iterate stops moving. Returns the minimal objective found.
pub fn svr_dual_reference(k: &[Vec<f64>], y: &[f64], eps: f64, c: f64, iterations: usize) -> f64 {
    let n = y.len();
    let l = 2 * n;
    let row_bound = k
        .iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let step = 1.0 / (2.0 * row_bound).max(1e-12);
    let grad = |a: &[f64]| -> Vec<f64> {
        let beta: Vec<f64> = (0..n).map(|i| a[i] - a[n + i]).collect();
        let kb: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| k[i][j] * beta[j]).sum())
            .collect();
        (0..l)
            .map(|t| if t < n { kb[t] + eps - y[t] } else { -kb[t - n] + eps + y[t - n] })
            .collect()
    };

    let mut x = vec![0.0; l];
    let mut z = x.clone();
    let mut theta = 1.0f64;
    let mut f_prev = svr_dual_objective(k, y, eps, &x);
    for _ in 0..iterations {
        let g = grad(&z);
        let target: Vec<f64> = (0..l).map(|t| z[t] - step * g[t]).collect();
        let x_next = project(&target, n, c);
        let f_next = svr_dual_objective(k, y, eps, &x_next);
        let moved = x_next
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if f_next > f_prev {
            // Restart momentum when the objective goes up.
            theta = 1.0;
            z = x.clone();
            continue;
        }
        let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        z = (0..l)
            .map(|t| x_next[t] + (theta - 1.0) / theta_next * (x_next[t] - x[t]))
            .collect();
        theta = theta_next;
        x = x_next;
        f_prev = f_next;
        if moved < 1e-15 {
            break;
        }
    }
    f_prev
}

// ---------------------------------------------------------------- fixtures

/// Random matrix with small integer-valued features (so splits see ties)
/// and a nonlinear target with noise.
pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Dataset {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..m).map(|_| rng.random_range(0..8) as f64).collect())
        .collect();
    let weights: Vec<f64> = (0..m).map(|_| rng.random_range(-3.0..3.0)).collect();
    let target = rows
        .iter()
        .map(|r| {
            let lin: f64 = r.iter().zip(&weights).map(|(x, w)| x * w).sum();
            lin + 2.0 * (r[0] * 0.7).sin() + rng.random_range(-0.5..0.5) + 10.0
        })
        .collect();
    Dataset::from_matrix(rows, target).unwrap()
}

/// A cheap but non-trivial model of each family.
pub fn small_model(family: hedonic::models::Family, train: &Dataset, seed: u64) -> Model {
    use hedonic::models::Family;
    match family {
        Family::Linear => Model::Linear(fit_linear(train).unwrap()),
        Family::Svr => Model::Svr(
            fit_svr(
                train,
                &SvrParams {
                    c: 10.0,
                    epsilon: 0.1,
                    kernel: KernelKind::Rbf,
                    gamma: Some(0.2),
                    ..Default::default()
                },
            )
            .unwrap(),
        ),
        Family::Tree => Model::Tree(
            fit_tree(
                train,
                &TreeParams {
                    cv_threshold: 0.0,
                    max_depth: Some(5),
                    min_samples_leaf: 2,
                },
            )
            .unwrap(),
        ),
        Family::Forest => Model::Forest(
            fit_forest(
                train,
                &ForestParams {
                    n_trees: 8,
                    max_depth: Some(4),
                    min_samples_leaf: 2,
                    ..Default::default()
                },
                seed,
            )
            .unwrap(),
        ),
        Family::Gbt => Model::Gbt(
            fit_gbt(
                train,
                &GbtParams {
                    n_rounds: 15,
                    learning_rate: 0.3,
                    max_depth: Some(3),
                    ..Default::default()
                },
            )
            .unwrap(),
        ),
    }
}
