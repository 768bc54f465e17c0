use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{check_training_data, Regressor};
use crate::error::Result;
use crate::preprocess::Dataset;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearParams {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
}

impl Regressor for LinearModel {
    fn n_features(&self) -> usize {
        self.coefficients.len()
    }

    fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(row)
                .map(|(w, x)| w * x)
                .sum::<f64>()
    }

    fn used_features(&self) -> Vec<usize> {
        (0..self.coefficients.len())
            .filter(|&j| self.coefficients[j] != 0.0)
            .collect()
    }
}

/// Ordinary least squares with an intercept.
///
/// Features and target are centered, then the centered system is solved
/// through a singular value decomposition. Singular values below
/// `σ_max · max(n, m) · ε` are treated as zero, which yields the
/// minimum-norm solution when the design is rank deficient. Columns that are
/// constant in the training data get a coefficient of exactly zero.
pub fn fit_linear(train: &Dataset) -> Result<LinearModel> {
    check_training_data(train)?;
    let n = train.n_rows();
    let m = train.n_features();

    let means: Vec<f64> = (0..m)
        .map(|j| train.rows.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let y_mean = train.target.iter().sum::<f64>() / n as f64;
    let active: Vec<usize> = (0..m)
        .filter(|&j| train.rows.iter().any(|r| r[j] != train.rows[0][j]))
        .collect();

    let mut coefficients = vec![0.0; m];
    if !active.is_empty() {
        let x = DMatrix::from_fn(n, active.len(), |i, k| {
            let j = active[k];
            train.rows[i][j] - means[j]
        });
        let y = DVector::from_iterator(n, train.target.iter().map(|v| v - y_mean));
        let svd = x.svd(true, true);
        let u = svd.u.as_ref().expect("u requested");
        let v_t = svd.v_t.as_ref().expect("v_t requested");
        let s_max = svd.singular_values.max();
        let tol = s_max * (n.max(active.len()) as f64) * f64::EPSILON;

        let uty = u.transpose() * y;
        let mut scaled = DVector::zeros(svd.singular_values.len());
        for (k, &s) in svd.singular_values.iter().enumerate() {
            if s > tol {
                scaled[k] = uty[k] / s;
            }
        }
        let w = v_t.transpose() * scaled;
        for (k, &j) in active.iter().enumerate() {
            coefficients[j] = w[k];
        }
    }

    let intercept = y_mean
        - coefficients
            .iter()
            .zip(&means)
            .map(|(w, mu)| w * mu)
            .sum::<f64>();
    Ok(LinearModel {
        coefficients,
        intercept,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_line() {
        let ds = Dataset::from_matrix(vec![vec![0.0], vec![1.0], vec![2.0]], vec![1.0, 3.0, 5.0])
            .unwrap();
        let m = fit_linear(&ds).unwrap();
        assert!((m.coefficients[0] - 2.0).abs() < 1e-12);
        assert!((m.intercept - 1.0).abs() < 1e-12);
        for (row, y) in ds.rows.iter().zip(&ds.target) {
            assert!((m.predict_row(row) - y).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_target() {
        let ds = Dataset::from_matrix(
            vec![vec![1.0, 7.0], vec![2.0, 3.0], vec![5.0, 1.0]],
            vec![5.0; 3],
        )
        .unwrap();
        let m = fit_linear(&ds).unwrap();
        assert!(m.coefficients.iter().all(|w| w.abs() < 1e-12));
        assert!((m.intercept - 5.0).abs() < 1e-12);
    }

    #[test]
    fn duplicated_column_gets_min_norm_split() {
        let rows = vec![vec![1.0, 1.0], vec![2.0, 2.0], vec![4.0, 4.0]];
        let ds = Dataset::from_matrix(rows, vec![2.0, 4.0, 8.0]).unwrap();
        let m = fit_linear(&ds).unwrap();
        assert!((m.coefficients[0] - 1.0).abs() < 1e-10);
        assert!((m.coefficients[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn constant_column_is_exactly_zero() {
        let rows = vec![vec![1.0, 9.0], vec![2.0, 9.0], vec![4.0, 9.0]];
        let ds = Dataset::from_matrix(rows, vec![2.0, 4.0, 8.5]).unwrap();
        let m = fit_linear(&ds).unwrap();
        assert_eq!(m.coefficients[1], 0.0);
        assert_eq!(m.used_features(), vec![0]);
    }

    #[test]
    fn empty_is_error() {
        let ds = Dataset::new(vec!["a".into()], vec![], vec![]).unwrap();
        assert!(fit_linear(&ds).is_err());
    }
}
