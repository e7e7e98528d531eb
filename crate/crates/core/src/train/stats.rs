use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::signal::TrialRecord;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    /// Upper-tail probability under the null of zero mean difference.
    pub p: f64,
    pub mean_diff: f64,
    pub n: usize,
}

/// One-tailed paired t-test of `mean(a − b) > 0`.
pub fn paired_ttest_one_tailed(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::DegenerateTest(format!(
            "need two equal-length samples of at least 2, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let sd = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    if sd == 0.0 {
        if d.iter().all(|&v| v == 0.0) {
            return Ok(TTest { t: 0.0, p: 0.5, mean_diff: 0.0, n });
        }
        return Err(Error::DegenerateTest(format!(
            "all {n} differences equal {mean}; t is unbounded"
        )));
    }
    let t = mean / (sd / (n as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .map_err(|e| Error::DegenerateTest(e.to_string()))?;
    Ok(TTest {
        t,
        p: dist.sf(t),
        mean_diff: mean,
        n,
    })
}

/// Per-row mean and standard deviation fitted on training data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowScaler {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl RowScaler {
    /// Fits over the time-concatenation of `[rows, t]` matrices. Rows with
    /// zero spread keep unit scale.
    pub fn fit(mats: &[&Tensor]) -> Result<Self> {
        let rows = mats.first().map_or(0, |m| m.shape()[0]);
        if mats.iter().any(|m| m.ndim() != 2 || m.shape()[0] != rows) {
            return Err(Error::dim("matrices disagree on row count"));
        }
        let count: usize = mats.iter().map(|m| m.shape()[1]).sum();
        if count < 2 {
            return Err(Error::DegenerateBatch(count));
        }
        let row_sums = |f: &dyn Fn(usize, f64) -> f64| {
            let mut acc = vec![0.0; rows];
            for m in mats {
                for (r, row) in m.data().chunks_exact(m.shape()[1]).enumerate() {
                    acc[r] += row.iter().map(|&v| f(r, v)).sum::<f64>();
                }
            }
            acc
        };
        let mean: Vec<f64> = row_sums(&|_, v| v).into_iter().map(|s| s / count as f64).collect();
        let sd = row_sums(&|r, v| (v - mean[r]).powi(2))
            .into_iter()
            .map(|s| {
                let sd = (s / count as f64).sqrt();
                if sd > 0.0 { sd } else { 1.0 }
            })
            .collect();
        Ok(RowScaler { mean, sd })
    }

    /// `(x − mean) / sd` per row of a `[rows, t]` matrix.
    pub fn apply(&self, m: &Tensor) -> Result<Tensor> {
        self.rowwise(m, |v, mu, sd| (v - mu) / sd)
    }

    pub fn invert(&self, m: &Tensor) -> Result<Tensor> {
        self.rowwise(m, |v, mu, sd| v * sd + mu)
    }

    /// Inverse transform of `[N, rows]` predictions (rows as columns).
    pub fn invert_columns(&self, m: &Tensor) -> Result<Tensor> {
        if m.ndim() != 2 || m.shape()[1] != self.mean.len() {
            return Err(Error::dim(format!("expected [N, {}], got {:?}", self.mean.len(), m.shape())));
        }
        let k = self.mean.len();
        Ok(Tensor::from_fn(m.shape(), |i| {
            let c = i % k;
            m.data()[i] * self.sd[c] + self.mean[c]
        }))
    }

    fn rowwise(&self, m: &Tensor, f: impl Fn(f64, f64, f64) -> f64) -> Result<Tensor> {
        if m.ndim() != 2 || m.shape()[0] != self.mean.len() {
            return Err(Error::dim(format!("expected [{}, t], got {:?}", self.mean.len(), m.shape())));
        }
        let t = m.shape()[1];
        Ok(Tensor::from_fn(m.shape(), |i| {
            let r = i / t;
            f(m.data()[i], self.mean[r], self.sd[r])
        }))
    }
}

/// z-scoring of EEG channels and joint angles with training statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub eeg: RowScaler,
    pub joints: RowScaler,
}

impl Standardizer {
    pub fn fit(trials: &[TrialRecord]) -> Result<Self> {
        let eeg = RowScaler::fit(&trials.iter().map(|t| &t.eeg).collect::<Vec<_>>())?;
        let joints = RowScaler::fit(&trials.iter().map(|t| &t.joints).collect::<Vec<_>>())?;
        Ok(Standardizer { eeg, joints })
    }

    pub fn apply(&self, trial: &TrialRecord) -> Result<TrialRecord> {
        Ok(TrialRecord {
            eeg: self.eeg.apply(&trial.eeg)?,
            joints: self.joints.apply(&trial.joints)?,
            ..trial.clone()
        })
    }

    pub fn apply_all(&self, trials: &[TrialRecord]) -> Result<Vec<TrialRecord>> {
        trials.iter().map(|t| self.apply(t)).collect()
    }
}
