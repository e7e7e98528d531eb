//! Adam and the max-norm weight constraint.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Moment buffers are keyed by parameter name and
/// created lazily with the parameter's shape.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    moments: BTreeMap<String, (Tensor, Tensor)>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update over `(name, param, grad)` triples. All gradients are
    /// checked before anything is modified; a non-finite gradient aborts the
    /// step and names the offending parameter.
    pub fn step<'a, I>(&mut self, updates: I) -> Result<()>
    where
        I: IntoIterator<Item = (&'a str, &'a mut Tensor, &'a Tensor)>,
    {
        let updates: Vec<_> = updates.into_iter().collect();
        for (name, p, g) in &updates {
            if p.shape() != g.shape() {
                return Err(Error::dim(format!(
                    "gradient for `{name}` has shape {:?}, parameter {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
            if let Some(bad) = g.data().iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "gradient of `{name}` (element {bad} = {})",
                    g.data()[bad]
                )));
            }
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powf(self.step as f64);
        let bc2 = 1.0 - beta2.powf(self.step as f64);
        for (name, p, g) in updates {
            let (m, v) = self
                .moments
                .entry(name.to_string())
                .or_insert_with(|| (Tensor::zeros(p.shape()), Tensor::zeros(p.shape())));
            let it = p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut().zip(v.data_mut()));
            for ((pv, &gv), (mv, vv)) in it {
                *mv = beta1 * *mv + (1.0 - beta1) * gv;
                *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
                let m_hat = *mv / bc1;
                let v_hat = *vv / bc2;
                *pv -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Rescales each output unit (slice along axis 0; the whole tensor if it is
/// 1-D) whose L2 norm exceeds `max_norm` back onto the norm ball.
pub fn apply_max_norm(w: &mut Tensor, max_norm: f64) -> Result<()> {
    if !(max_norm > 0.0) {
        return Err(Error::param(format!("max norm must be positive, got {max_norm}")));
    }
    let unit = if w.ndim() <= 1 { w.len() } else { w.len() / w.shape()[0] };
    for row in w.data_mut().chunks_exact_mut(unit) {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > max_norm {
            let s = max_norm / norm;
            row.iter_mut().for_each(|v| *v *= s);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut adam = Adam::new(AdamConfig::default());
        let mut p = Tensor::scalar(0.5);
        let g = Tensor::scalar(-3.0);
        adam.step([("w", &mut p, &g)]).unwrap();
        assert!((p.item() - (0.5 + 1e-3)).abs() < 1e-10);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut adam = Adam::new(AdamConfig::default());
        let mut p = Tensor::from_vec(vec![1.0, -2.0]);
        let g = Tensor::zeros(&[2]);
        for _ in 0..10 {
            adam.step([("w", &mut p, &g)]).unwrap();
        }
        assert_eq!(p.data(), &[1.0, -2.0]);
    }

    #[test]
    fn converges_on_quadratic() {
        let mut adam = Adam::new(AdamConfig {
            lr: 0.1,
            ..Default::default()
        });
        let mut p = Tensor::scalar(1.0);
        for _ in 0..200 {
            let g = Tensor::scalar(2.0 * p.item());
            adam.step([("theta", &mut p, &g)]).unwrap();
        }
        assert!(p.item().abs() < 0.05, "theta = {}", p.item());
    }

    #[test]
    fn nan_gradient_names_parameter() {
        let mut adam = Adam::new(AdamConfig::default());
        let mut p = Tensor::scalar(1.0);
        let g = Tensor::scalar(f64::NAN);
        let err = adam.step([("fusion.block0.conv", &mut p, &g)]).unwrap_err();
        assert!(err.to_string().contains("fusion.block0.conv"));
        assert_eq!(p.item(), 1.0);
        assert_eq!(adam.steps_taken(), 0);
    }

    #[test]
    fn max_norm_cases() {
        let mut small = Tensor::from_vec(vec![0.06, 0.08]);
        apply_max_norm(&mut small, 0.25).unwrap();
        assert_eq!(small.data(), &[0.06, 0.08]);

        let mut w = Tensor::from_vec(vec![3.0, 4.0]);
        apply_max_norm(&mut w, 0.25).unwrap();
        assert!((w.data()[0] - 0.15).abs() < 1e-15 && (w.data()[1] - 0.20).abs() < 1e-15);
        let once = w.clone();
        apply_max_norm(&mut w, 0.25).unwrap();
        assert_eq!(w, once);

        assert!(apply_max_norm(&mut w, 0.0).is_err());
    }

    #[test]
    fn max_norm_is_per_output_unit() {
        let mut w = Tensor::from_rows(&[vec![3.0, 4.0], vec![0.1, 0.0]]).unwrap();
        apply_max_norm(&mut w, 1.0).unwrap();
        assert!((w.at(&[0, 0]) - 0.6).abs() < 1e-15);
        assert_eq!(w.at(&[1, 0]), 0.1);
    }
}
