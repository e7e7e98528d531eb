use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn check_lengths(y: &[f64], yhat: &[f64]) -> Result<()> {
    if y.len() != yhat.len() {
        return Err(Error::dim(format!("{} targets vs {} predictions", y.len(), yhat.len())));
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Deviations taken about the first sample first, so a constant sequence
/// yields exactly zero spread.
fn centered(v: &[f64]) -> Vec<f64> {
    let shifted: Vec<f64> = v.iter().map(|x| x - v[0]).collect();
    let m = mean(&shifted);
    shifted.iter().map(|x| x - m).collect()
}

/// Pearson correlation from population moments.
pub fn pearson_r(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_lengths(y, yhat)?;
    if y.len() < 2 {
        return Err(Error::UndefinedMetric(format!("r needs 2 samples, got {}", y.len())));
    }
    let (cy, cp) = (centered(y), centered(yhat));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&da, &db) in cy.iter().zip(&cp) {
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedMetric(
            if sxx == 0.0 { "r: targets have zero variance" } else { "r: predictions have zero variance" }.into(),
        ));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Coefficient of determination `1 − SS_res / SS_tot`.
pub fn r2_score(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_lengths(y, yhat)?;
    if y.len() < 2 {
        return Err(Error::UndefinedMetric(format!("R² needs 2 samples, got {}", y.len())));
    }
    let ss_tot: f64 = centered(y).iter().map(|v| v * v).sum();
    if ss_tot == 0.0 {
        return Err(Error::UndefinedMetric("R²: targets have zero variance".into()));
    }
    let ss_res: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn mae(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_lengths(y, yhat)?;
    if y.is_empty() {
        return Err(Error::UndefinedMetric("MAE of an empty sequence".into()));
    }
    Ok(y.iter().zip(yhat).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointMetrics {
    pub joint: String,
    pub r: Option<f64>,
    pub r2: Option<f64>,
    pub mae: f64,
}

/// Mean and sample standard deviation over the joints where a value exists.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
}

impl Summary {
    fn of(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let m = mean(values);
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Summary { mean: m, sd })
    }
}

/// Per-joint and joint-averaged regression metrics. Carries no timing so
/// that identical runs serialize identically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub joints: Vec<JointMetrics>,
    pub r: Option<Summary>,
    pub r2: Option<Summary>,
    pub mae: Summary,
    /// Metrics that could not be computed, e.g. `lknee: r: predictions have zero variance`.
    pub undefined: Vec<String>,
    pub samples: usize,
    #[serde(default)]
    pub val_history: Vec<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl MetricsReport {
    /// Metrics of `[N, d_J]` predictions against `[N, d_J]` targets.
    pub fn compute(y: &Tensor, yhat: &Tensor, joint_names: &[&str]) -> Result<Self> {
        if y.shape() != yhat.shape() || y.ndim() != 2 {
            return Err(Error::dim(format!("targets {:?} vs predictions {:?}", y.shape(), yhat.shape())));
        }
        let (n, j) = (y.shape()[0], y.shape()[1]);
        let column = |m: &Tensor, k: usize| (0..n).map(|i| m.data()[i * j + k]).collect::<Vec<_>>();
        let mut joints = Vec::with_capacity(j);
        let mut undefined = Vec::new();
        for k in 0..j {
            let name = joint_names.get(k).map_or(k.to_string(), |s| s.to_string());
            let (a, b) = (column(y, k), column(yhat, k));
            let mut keep = |res: Result<f64>| match res {
                Ok(v) => Some(v),
                Err(Error::UndefinedMetric(msg)) => {
                    undefined.push(format!("{name}: {msg}"));
                    None
                }
                Err(_) => None,
            };
            let r = keep(pearson_r(&a, &b));
            let r2 = keep(r2_score(&a, &b));
            joints.push(JointMetrics {
                joint: name,
                r,
                r2,
                mae: mae(&a, &b)?,
            });
        }
        let pick = |f: fn(&JointMetrics) -> Option<f64>| joints.iter().filter_map(f).collect::<Vec<_>>();
        let r = Summary::of(&pick(|m| m.r));
        let r2 = Summary::of(&pick(|m| m.r2));
        let mae = Summary::of(&pick(|m| Some(m.mae))).expect("at least one joint");
        Ok(MetricsReport {
            joints,
            r,
            r2,
            mae,
            undefined,
            samples: n,
            val_history: Vec::new(),
            seed: None,
        })
    }

    /// Joint-averaged r, NaN when no joint has a defined correlation.
    pub fn mean_r(&self) -> f64 {
        self.r.map_or(f64::NAN, |s| s.mean)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_examples() {
        let y = [1.0, 2.0, 3.0];
        assert!((pearson_r(&y, &y).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson_r(&y, &[-1.0, -2.0, -3.0]).unwrap() + 1.0).abs() < 1e-15);
        // cov = 1.5/3·… → 3 / sqrt(2 · 4.6667)
        let expected = 3.0 / (2.0f64 * 14.0 / 3.0).sqrt();
        let r = pearson_r(&y, &[1.0, 2.0, 4.0]).unwrap();
        assert!((r - expected).abs() < 1e-14);
        assert!((r - 0.98198).abs() < 1e-5);
        assert_eq!(r2_score(&[0.0, 1.0], &[2.0, 2.0]).unwrap(), -9.0);
        assert_eq!(r2_score(&y, &y).unwrap(), 1.0);
        assert_eq!(r2_score(&y, &[2.0; 3]).unwrap(), 0.0);
        assert_eq!(mae(&[0.0, 0.0], &[2.0, -2.0]).unwrap(), 2.0);
        assert_eq!(mae(&y, &y).unwrap(), 0.0);
    }

    #[test]
    fn undefined_cases_are_errors() {
        assert!(matches!(pearson_r(&[1.0, 1.0], &[1.0, 2.0]), Err(Error::UndefinedMetric(_))));
        assert!(matches!(pearson_r(&[1.0, 2.0], &[3.0, 3.0]), Err(Error::UndefinedMetric(_))));
        assert!(matches!(r2_score(&[1.0, 1.0], &[1.0, 2.0]), Err(Error::UndefinedMetric(_))));
        assert!(pearson_r(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn report_flags_constant_predictor() {
        let y = Tensor::from_fn(&[10, 2], |i| (i as f64).sin());
        let col_means: Vec<f64> = (0..2).map(|k| (0..10).map(|i| y.data()[i * 2 + k]).sum::<f64>() / 10.0).collect();
        let yhat = Tensor::from_fn(&[10, 2], |i| col_means[i % 2]);
        let rep = MetricsReport::compute(&y, &yhat, &["a", "b"]).unwrap();
        assert!(rep.r.is_none());
        assert_eq!(rep.undefined.len(), 2);
        assert!(rep.r2.unwrap().mean.abs() < 1e-12);

        let perfect = MetricsReport::compute(&y, &y, &["a", "b"]).unwrap();
        assert_eq!(perfect.mean_r(), 1.0);
        assert_eq!(perfect.r2.unwrap().mean, 1.0);
        assert_eq!(perfect.mae.mean, 0.0);
    }
}
