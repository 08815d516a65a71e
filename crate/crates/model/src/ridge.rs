//! Closed-form ridge readout on frozen features.
//!
//! Columns are centered and scaled to unit variance, the target is centered,
//! and `(XᵀX + λI) w = Xᵀy` is solved by Cholesky, falling back to an SVD
//! solve if the system is not numerically positive definite. The intercept is
//! not penalized.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::nn::Matrix;

/// Columns with smaller spread are treated as constant.
const MIN_SCALE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeReadout {
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl RidgeReadout {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept
            + row
                .iter()
                .enumerate()
                .map(|(j, x)| (x - self.feature_mean[j]) / self.feature_scale[j] * self.weights[j])
                .sum::<f64>()
    }

    pub fn predict(&self, features: &Matrix) -> Vec<f64> {
        features.row_iter().map(|r| self.predict_row(&r.iter().copied().collect::<Vec<_>>())).collect()
    }
}

pub fn fit_readout_ridge(features: &Matrix, targets: &[f64], lambda: f64) -> Result<RidgeReadout, ModelError> {
    let (n, p) = features.shape();
    if n == 0 {
        return Err(ModelError::ShapeMismatch { name: "ridge features".into(), expected: (1, p), found: (0, p) });
    }
    if targets.len() != n {
        return Err(ModelError::ShapeMismatch { name: "ridge targets".into(), expected: (n, 1), found: (targets.len(), 1) });
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::NonfiniteInput("ridge features"));
    }
    if targets.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::NonfiniteInput("ridge targets"));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(ModelError::NonfiniteInput("ridge penalty"));
    }

    let mut mean = vec![0.0; p];
    let mut scale = vec![1.0; p];
    let mut x = features.clone();
    for (j, mut col) in x.column_iter_mut().enumerate() {
        let m = col.sum() / n as f64;
        let s = (col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64).sqrt();
        mean[j] = m;
        scale[j] = if s > MIN_SCALE { s } else { 1.0 };
        for v in col.iter_mut() {
            *v = (*v - m) / scale[j];
        }
    }
    let y_mean = targets.iter().sum::<f64>() / n as f64;
    let y = DVector::from_iterator(n, targets.iter().map(|t| t - y_mean));

    let mut gram = x.transpose() * &x;
    for j in 0..p {
        gram[(j, j)] += lambda;
    }
    let rhs = x.transpose() * y;
    let w = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => solve_svd(gram, &rhs)?,
    };
    if w.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::NonfiniteInput("ridge solution"));
    }
    Ok(RidgeReadout { feature_mean: mean, feature_scale: scale, weights: w.iter().copied().collect(), intercept: y_mean })
}

fn solve_svd(a: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>, ModelError> {
    let svd = a.svd(true, true);
    let tol = svd.singular_values.max() * 1e-12;
    svd.solve(b, tol).map_err(|e| ModelError::Format(e.to_string()))
}

pub fn mean_squared_error(pred: &[f64], truth: &[f64]) -> f64 {
    pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / truth.len().max(1) as f64
}

/// Coefficient of determination against the mean of `truth`.
pub fn r_squared(pred: &[f64], truth: &[f64]) -> f64 {
    let mean = truth.iter().sum::<f64>() / truth.len().max(1) as f64;
    let total: f64 = truth.iter().map(|t| (t - mean) * (t - mean)).sum();
    let resid: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    if total == 0.0 {
        if resid == 0.0 {
            1.0
        } else {
            f64::NEG_INFINITY
        }
    } else {
        1.0 - resid / total
    }
}
