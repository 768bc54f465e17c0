//! Epsilon-insensitive support vector regression.
//!
//! The dual is solved in the doubled-variable form
//!
//! ```text
//! min ½ aᵀQa + pᵀa   s.t.  sᵀa = 0,  0 ≤ a ≤ C
//! a = [α; α*],  s = [+1; −1],  p = [ε − y; ε + y],  Q_ij = s_i s_j K(x_i, x_j)
//! ```
//!
//! by pairwise coordinate steps with second-order working-set selection.
//! The fitted function is `Σ (α_i − α*_i) K(x_i, x) + b`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_training_data, Regressor};
use crate::error::{Error, Result};
use crate::preprocess::Dataset;

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Linear,
    Rbf,
    Polynomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
    Polynomial { gamma: f64, degree: u32, coef0: f64 },
}

impl Kernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => dot(a, b),
            Kernel::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
            Kernel::Polynomial {
                gamma,
                degree,
                coef0,
            } => (gamma * dot(a, b) + coef0).powi(degree as i32),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvrParams {
    /// Penalty on tube violations, in target units.
    pub c: f64,
    /// Tube half-width, in target units.
    pub epsilon: f64,
    pub kernel: KernelKind,
    /// Kernel scale for rbf and polynomial; `None` means 1/M.
    pub gamma: Option<f64>,
    pub degree: u32,
    pub coef0: f64,
    /// Stop when the maximal KKT violation drops below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Standardize features and target with training mean/std.
    pub standardize: bool,
}

impl Default for SvrParams {
    fn default() -> Self {
        SvrParams {
            c: 1e5,
            epsilon: 1e4,
            kernel: KernelKind::Rbf,
            gamma: None,
            degree: 3,
            coef0: 1.0,
            tol: 1e-3,
            max_iter: 100_000,
            standardize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrModel {
    #[serde(skip)]
    pub params: SvrParams,
    pub kernel: Kernel,
    /// α_i − α*_i for each retained row, in target units.
    pub dual_coefficients: Vec<f64>,
    /// Retained training rows, in the scaled input space.
    pub support_rows: Vec<Vec<f64>>,
    /// In target units.
    pub intercept: f64,
    pub epsilon: f64,
    pub c: f64,
    pub x_mean: Vec<f64>,
    /// Zero marks a column that was constant in training; it is ignored.
    pub x_scale: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Dual objective at the returned point, in solver units.
    pub objective: f64,
}

impl SvrModel {
    fn scale_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.x_mean.iter().zip(&self.x_scale))
            .map(|(x, (mu, s))| if *s == 0.0 { 0.0 } else { (x - mu) / s })
            .collect()
    }

    /// Rows with a nonzero dual coefficient.
    pub fn support_count(&self) -> usize {
        self.dual_coefficients.len()
    }
}

impl Regressor for SvrModel {
    fn n_features(&self) -> usize {
        self.x_mean.len()
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        let z = self.scale_row(row);
        self.intercept
            + self
                .dual_coefficients
                .iter()
                .zip(&self.support_rows)
                .map(|(beta, sv)| beta * self.kernel.eval(sv, &z))
                .sum::<f64>()
    }

    fn used_features(&self) -> Vec<usize> {
        if self.dual_coefficients.is_empty() {
            return Vec::new();
        }
        (0..self.x_scale.len())
            .filter(|&j| self.x_scale[j] != 0.0)
            .collect()
    }
}

/// Result of the dual solver on an explicit kernel matrix.
#[derive(Debug, Clone)]
pub struct DualSolution {
    /// α_i − α*_i.
    pub beta: Vec<f64>,
    pub intercept: f64,
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Solves the epsilon-SVR dual for a dense row-major `n × n` kernel matrix.
pub fn solve_dual(
    kernel: &[f64],
    y: &[f64],
    epsilon: f64,
    c: f64,
    tol: f64,
    max_iter: usize,
) -> DualSolution {
    let n = y.len();
    let l = 2 * n;
    let k = |i: usize, j: usize| kernel[(i % n) * n + (j % n)];
    let sign = |t: usize| if t < n { 1.0 } else { -1.0 };
    let p: Vec<f64> = (0..l)
        .map(|t| if t < n { epsilon - y[t] } else { epsilon + y[t - n] })
        .collect();
    let qd: Vec<f64> = (0..l).map(|t| k(t, t)).collect();

    let mut a = vec![0.0; l];
    let mut g = p.clone();
    let upper = |a: &[f64], t: usize| a[t] >= c;
    let lower = |a: &[f64], t: usize| a[t] <= 0.0;

    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        // Maximal violating index from the "up" set.
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..l {
            let v = if sign(t) > 0.0 {
                (!upper(&a, t)).then(|| -g[t])
            } else {
                (!lower(&a, t)).then(|| g[t])
            };
            if let Some(v) = v {
                if v >= gmax {
                    gmax = v;
                    i_sel = Some(t);
                }
            }
        }
        let Some(i) = i_sel else {
            converged = true;
            break;
        };

        // Partner chosen by largest second-order objective decrease.
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = None;
        let mut best_obj = f64::INFINITY;
        for t in 0..l {
            let q_it = sign(i) * sign(t) * k(i, t);
            let candidate = if sign(t) > 0.0 {
                if lower(&a, t) {
                    None
                } else {
                    gmax2 = gmax2.max(g[t]);
                    Some((gmax + g[t], qd[i] + qd[t] - 2.0 * sign(i) * q_it))
                }
            } else if upper(&a, t) {
                None
            } else {
                gmax2 = gmax2.max(-g[t]);
                Some((gmax - g[t], qd[i] + qd[t] + 2.0 * sign(i) * q_it))
            };
            if let Some((diff, quad)) = candidate {
                if diff > 0.0 {
                    let obj = -(diff * diff) / if quad > 0.0 { quad } else { TAU };
                    if obj <= best_obj {
                        best_obj = obj;
                        j_sel = Some(t);
                    }
                }
            }
        }
        if gmax + gmax2 < tol {
            converged = true;
            break;
        }
        let Some(j) = j_sel else {
            converged = true;
            break;
        };
        iterations += 1;

        let q_ij = sign(i) * sign(j) * k(i, j);
        let (old_i, old_j) = (a[i], a[j]);
        if sign(i) != sign(j) {
            let quad = (qd[i] + qd[j] + 2.0 * q_ij).max(TAU);
            let delta = (-g[i] - g[j]) / quad;
            let diff = a[i] - a[j];
            a[i] += delta;
            a[j] += delta;
            if diff > 0.0 {
                if a[j] < 0.0 {
                    a[j] = 0.0;
                    a[i] = diff;
                }
            } else if a[i] < 0.0 {
                a[i] = 0.0;
                a[j] = -diff;
            }
            if diff > 0.0 {
                if a[i] > c {
                    a[i] = c;
                    a[j] = c - diff;
                }
            } else if a[j] > c {
                a[j] = c;
                a[i] = c + diff;
            }
        } else {
            let quad = (qd[i] + qd[j] - 2.0 * q_ij).max(TAU);
            let delta = (g[i] - g[j]) / quad;
            let sum = a[i] + a[j];
            a[i] -= delta;
            a[j] += delta;
            if sum > c {
                if a[i] > c {
                    a[i] = c;
                    a[j] = sum - c;
                }
            } else if a[j] < 0.0 {
                a[j] = 0.0;
                a[i] = sum;
            }
            if sum > c {
                if a[j] > c {
                    a[j] = c;
                    a[i] = sum - c;
                }
            } else if a[i] < 0.0 {
                a[i] = 0.0;
                a[j] = sum;
            }
        }

        let (di, dj) = (a[i] - old_i, a[j] - old_j);
        if di != 0.0 || dj != 0.0 {
            for t in 0..l {
                g[t] += sign(i) * sign(t) * k(i, t) * di + sign(j) * sign(t) * k(j, t) * dj;
            }
        }
    }

    // Offset: average over free variables, else midpoint of the feasible range.
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut free_sum) = (0usize, 0.0);
    for t in 0..l {
        let yg = sign(t) * g[t];
        if upper(&a, t) {
            if sign(t) < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if lower(&a, t) {
            if sign(t) > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            free_sum += yg;
        }
    }
    let rho = if free > 0 {
        free_sum / free as f64
    } else {
        (ub + lb) / 2.0
    };

    let objective = 0.5 * (0..l).map(|t| a[t] * (g[t] + p[t])).sum::<f64>();
    DualSolution {
        beta: (0..n).map(|i| a[i] - a[i + n]).collect(),
        intercept: -rho,
        objective,
        converged,
        iterations,
    }
}

/// Dense kernel matrix of `rows`, row-major.
pub fn kernel_matrix(kernel: &Kernel, rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len();
    let mut out = vec![0.0; n * n];
    out.par_chunks_mut(n.max(1))
        .enumerate()
        .for_each(|(i, chunk)| {
            for (j, v) in chunk.iter_mut().enumerate() {
                *v = kernel.eval(&rows[i], &rows[j]);
            }
        });
    out
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn fit_svr(train: &Dataset, params: &SvrParams) -> Result<SvrModel> {
    check_training_data(train)?;
    if !(params.c > 0.0) {
        return Err(Error::Param(format!("C must be positive, got {}", params.c)));
    }
    if !(params.epsilon >= 0.0) {
        return Err(Error::Param("epsilon must be >= 0".into()));
    }
    if params.gamma.is_some_and(|g| !(g > 0.0)) {
        return Err(Error::Param("gamma must be positive".into()));
    }
    if !(params.tol > 0.0) {
        return Err(Error::Param("tol must be positive".into()));
    }

    let m = train.n_features();
    let gamma = params.gamma.unwrap_or(1.0 / m.max(1) as f64);
    let kernel = match params.kernel {
        KernelKind::Linear => Kernel::Linear,
        KernelKind::Rbf => Kernel::Rbf { gamma },
        KernelKind::Polynomial => Kernel::Polynomial {
            gamma,
            degree: params.degree.max(1),
            coef0: params.coef0,
        },
    };

    let (x_mean, x_scale, y_mean, y_scale) = if params.standardize {
        let (mut xm, mut xs) = (Vec::with_capacity(m), Vec::with_capacity(m));
        for j in 0..m {
            let (mu, sd) = mean_std(train.rows.iter().map(|r| r[j]));
            xm.push(mu);
            xs.push(sd);
        }
        let (ym, ys) = mean_std(train.target.iter().copied());
        (xm, xs, ym, if ys > 0.0 { ys } else { 1.0 })
    } else {
        (vec![0.0; m], vec![1.0; m], 0.0, 1.0)
    };

    let mut model = SvrModel {
        params: params.clone(),
        kernel,
        dual_coefficients: Vec::new(),
        support_rows: Vec::new(),
        intercept: 0.0,
        epsilon: params.epsilon,
        c: params.c,
        x_mean,
        x_scale,
        converged: false,
        iterations: 0,
        objective: 0.0,
    };
    let scaled: Vec<Vec<f64>> = train.rows.iter().map(|r| model.scale_row(r)).collect();
    let z: Vec<f64> = train.target.iter().map(|y| (y - y_mean) / y_scale).collect();
    let gram = kernel_matrix(&kernel, &scaled);
    let sol = solve_dual(
        &gram,
        &z,
        params.epsilon / y_scale,
        params.c / y_scale,
        params.tol,
        params.max_iter,
    );

    for (row, beta) in scaled.into_iter().zip(&sol.beta) {
        if *beta != 0.0 {
            model.support_rows.push(row);
            model.dual_coefficients.push(beta * y_scale);
        }
    }
    model.intercept = sol.intercept * y_scale + y_mean;
    model.converged = sol.converged;
    model.iterations = sol.iterations;
    model.objective = sol.objective;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line() -> Dataset {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let target = (0..10).map(|i| 3.0 * i as f64 + 2.0).collect();
        Dataset::from_matrix(rows, target).unwrap()
    }

    #[test]
    fn flat_targets_predict_constant() {
        let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let ds = Dataset::from_matrix(rows, vec![7.0; 6]).unwrap();
        let p = SvrParams {
            epsilon: 0.1,
            c: 10.0,
            ..Default::default()
        };
        let m = fit_svr(&ds, &p).unwrap();
        assert_eq!(m.support_count(), 0);
        for r in &ds.rows {
            assert_eq!(m.predict_row(r), 7.0);
        }
    }

    #[test]
    fn linear_kernel_tracks_a_line() {
        let p = SvrParams {
            kernel: KernelKind::Linear,
            c: 100.0,
            epsilon: 0.01,
            tol: 1e-6,
            ..Default::default()
        };
        let ds = line();
        let m = fit_svr(&ds, &p).unwrap();
        assert!(m.converged);
        for (r, y) in ds.rows.iter().zip(&ds.target) {
            assert!((m.predict_row(r) - y).abs() < 0.05, "{} vs {y}", m.predict_row(r));
        }
    }

    #[test]
    fn duals_stay_in_box() {
        let ds = line();
        for kind in [KernelKind::Linear, KernelKind::Rbf, KernelKind::Polynomial] {
            let p = SvrParams {
                kernel: kind,
                c: 2.0,
                epsilon: 0.5,
                ..Default::default()
            };
            let m = fit_svr(&ds, &p).unwrap();
            assert!(m.dual_coefficients.iter().all(|b| b.abs() <= 2.0 + 1e-12));
        }
    }

    #[test]
    fn wide_tube_has_no_support_rows() {
        let p = SvrParams {
            epsilon: 1e3,
            c: 1.0,
            standardize: false,
            ..Default::default()
        };
        assert_eq!(fit_svr(&line(), &p).unwrap().support_count(), 0);
    }

    #[test]
    fn rejects_non_positive_c() {
        let p = SvrParams {
            c: 0.0,
            ..Default::default()
        };
        assert!(matches!(fit_svr(&line(), &p), Err(Error::Param(_))));
    }
}
