use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::WindowSet;
use crate::error::{Error, Result};
use crate::tensor::ops::gemm;
use crate::tensor::Tensor;

/// Closed-form ridge regression on flattened windows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub lambda: f64,
    /// `[P, d_J]`.
    pub weights: Vec<f64>,
    pub feature_mean: Vec<f64>,
    pub target_mean: Vec<f64>,
}

fn design(set: &WindowSet) -> (Vec<f64>, usize) {
    let p = set.n_channels() * set.window();
    let mut x = Vec::with_capacity(set.len() * p);
    for i in 0..set.len() {
        x.extend(set.features(i));
    }
    (x, p)
}

/// Solves `(XᵀX + λI) W = XᵀY` on centered features and targets.
pub fn ridge_fit(train: &WindowSet, lambda: f64) -> Result<RidgeModel> {
    if !(lambda > 0.0) {
        return Err(Error::param(format!("ridge lambda must be positive, got {lambda}")));
    }
    if train.len() < 2 {
        return Err(Error::DegenerateBatch(train.len()));
    }
    let (mut x, p) = design(train);
    let y = train.targets()?;
    let (n, j) = (train.len(), train.n_joints());
    let mut fmean = vec![0.0; p];
    for row in x.chunks_exact(p) {
        fmean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
    }
    fmean.iter_mut().for_each(|m| *m /= n as f64);
    for row in x.chunks_exact_mut(p) {
        row.iter_mut().zip(&fmean).for_each(|(v, m)| *v -= m);
    }
    let tmean: Vec<f64> = (0..j).map(|k| (0..n).map(|i| y.data()[i * j + k]).sum::<f64>() / n as f64).collect();
    let yc: Vec<f64> = y.data().iter().enumerate().map(|(i, v)| v - tmean[i % j]).collect();

    let mut gram = vec![0.0; p * p];
    gemm(p, n, p, &x, (1, p), &x, (p, 1), 0.0, &mut gram, (p, 1));
    for d in 0..p {
        gram[d * p + d] += lambda;
    }
    let mut rhs = vec![0.0; p * j];
    gemm(p, n, j, &x, (1, p), &yc, (j, 1), 0.0, &mut rhs, (j, 1));
    let chol = DMatrix::from_row_slice(p, p, &gram)
        .cholesky()
        .ok_or_else(|| Error::NonFinite("ridge normal equations are not positive definite".into()))?;
    let mut weights = vec![0.0; p * j];
    for k in 0..j {
        let b = DVector::from_iterator(p, (0..p).map(|r| rhs[r * j + k]));
        let w = chol.solve(&b);
        for r in 0..p {
            weights[r * j + k] = w[r];
        }
    }
    Ok(RidgeModel {
        lambda,
        weights,
        feature_mean: fmean,
        target_mean: tmean,
    })
}

impl RidgeModel {
    /// `[N, d_J]` predictions for every window of `set`.
    pub fn predict(&self, set: &WindowSet) -> Result<Tensor> {
        let (mut x, p) = design(set);
        if p != self.feature_mean.len() {
            return Err(Error::dim(format!("{p} features, model expects {}", self.feature_mean.len())));
        }
        for row in x.chunks_exact_mut(p) {
            row.iter_mut().zip(&self.feature_mean).for_each(|(v, m)| *v -= m);
        }
        let (n, j) = (set.len(), self.target_mean.len());
        let mut out: Vec<f64> = (0..n * j).map(|i| self.target_mean[i % j]).collect();
        gemm(n, p, j, &x, (p, 1), &self.weights, (j, 1), 1.0, &mut out, (j, 1));
        Tensor::new(&[n, j], out)
    }
}
