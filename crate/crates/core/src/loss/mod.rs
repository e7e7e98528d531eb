//! Hybrid temporal-spectral reward loss and its ablations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::ops::{adjoint_with, dft_with, twiddles};
use crate::tensor::{Tensor, Var};

/// Which loss terms are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Reward-transformed time and frequency terms.
    Htsr,
    /// Plain mean squared error.
    Mse,
    /// Reward-transformed mean squared error only.
    TimeReward,
    /// Time and frequency terms without the reward transform.
    TimeFreq,
}

impl LossKind {
    pub const ALL: [LossKind; 4] = [LossKind::Htsr, LossKind::Mse, LossKind::TimeReward, LossKind::TimeFreq];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Htsr => "htsr",
            LossKind::Mse => "mse",
            LossKind::TimeReward => "time_reward",
            LossKind::TimeFreq => "time_freq",
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown loss `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    /// Weight of the frequency term.
    pub alpha: f64,
    /// Weight of the reward log term.
    pub beta: f64,
    pub epsilon: f64,
    pub use_freq: bool,
    pub use_reward: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self::for_kind(LossKind::Htsr)
    }
}

impl LossConfig {
    pub fn for_kind(kind: LossKind) -> Self {
        let (use_freq, use_reward) = match kind {
            LossKind::Htsr => (true, true),
            LossKind::Mse => (false, false),
            LossKind::TimeReward => (false, true),
            LossKind::TimeFreq => (true, false),
        };
        LossConfig {
            alpha: 0.5,
            beta: 0.1,
            epsilon: 1e-6,
            use_freq,
            use_reward,
        }
    }

    pub fn kind(&self) -> LossKind {
        match (self.use_freq, self.use_reward) {
            (true, true) => LossKind::Htsr,
            (false, false) => LossKind::Mse,
            (false, true) => LossKind::TimeReward,
            (true, false) => LossKind::TimeFreq,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) || !(self.beta >= 0.0) || !(self.epsilon > 0.0) {
            return Err(Error::Config(format!(
                "loss needs 0 <= alpha <= 1, beta >= 0, epsilon > 0; got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Scalars of one loss evaluation, in training-log naming.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    #[serde(rename = "L_time")]
    pub time: f64,
    #[serde(rename = "L_time_reward")]
    pub time_reward: f64,
    #[serde(rename = "L_freq")]
    pub freq: f64,
    #[serde(rename = "L_freq_reward")]
    pub freq_reward: f64,
    #[serde(rename = "L_total")]
    pub total: f64,
}

fn check_pair(pred: &Tensor, target: &Tensor) -> Result<()> {
    if pred.shape() != target.shape() || pred.ndim() != 2 {
        return Err(Error::dim(format!(
            "prediction {:?} and target {:?} must be equal [B, d_J] matrices",
            pred.shape(),
            target.shape()
        )));
    }
    Ok(())
}

/// `L + β·ln(1 − e^{−L} + ε)` for a plain number.
pub fn reward_value(loss: f64, beta: f64, epsilon: f64) -> f64 {
    loss + beta * (1.0 - (-loss).exp() + epsilon).ln()
}

/// Per joint, DFT along the batch axis of `pred − target`; returns the bins
/// as `[joint][bin] = (re, im)`.
fn joint_spectra(diff: &[f64], b: usize, j: usize, tw: &[(f64, f64)]) -> Vec<Vec<(f64, f64)>> {
    (0..j)
        .map(|jj| {
            let series: Vec<f64> = (0..b).map(|t| diff[t * j + jj]).collect();
            dft_with(&series, tw)
        })
        .collect()
}

/// DFT-L1 distance of two `[B, d_J]` matrices as a plain number.
pub fn dft_l1_value(pred: &Tensor, target: &Tensor) -> Result<f64> {
    check_pair(pred, target)?;
    let (b, j) = (pred.shape()[0], pred.shape()[1]);
    let diff: Vec<f64> = pred.data().iter().zip(target.data()).map(|(p, t)| p - t).collect();
    let spectra = joint_spectra(&diff, b, j, &twiddles(b));
    let total: f64 = spectra.iter().flatten().map(|(r, i)| r.hypot(*i)).sum();
    Ok(total / (b * j) as f64)
}

impl<'t> Var<'t> {
    /// Mean squared error against a fixed target.
    pub fn mse_loss(self, target: &Tensor) -> Result<Var<'t>> {
        let p = self.value();
        check_pair(&p, target)?;
        let n = p.len() as f64;
        let diff: Vec<f64> = p.data().iter().zip(target.data()).map(|(a, b)| a - b).collect();
        let value = diff.iter().map(|d| d * d).sum::<f64>() / n;
        self.tape().push(
            "mse_loss",
            Tensor::scalar(value),
            &[self],
            Box::new(move |ctx| {
                let g = ctx.grad.item();
                let shape = ctx.inputs[0].shape();
                let d = diff.iter().map(|v| 2.0 * v / n * g).collect();
                vec![Some(Tensor::new(shape, d).unwrap())]
            }),
        )
    }

    /// Mean over joints and frequency bins of the complex modulus of the
    /// spectral error; the DFT runs along the batch axis of `[B, d_J]`.
    pub fn dft_l1_loss(self, target: &Tensor) -> Result<Var<'t>> {
        let p = self.value();
        check_pair(&p, target)?;
        let (b, j) = (p.shape()[0], p.shape()[1]);
        let tw = twiddles(b);
        let diff: Vec<f64> = p.data().iter().zip(target.data()).map(|(a, c)| a - c).collect();
        let spectra = joint_spectra(&diff, b, j, &tw);
        let scale = 1.0 / (b * j) as f64;
        let value = spectra.iter().flatten().map(|(r, i)| r.hypot(*i)).sum::<f64>() * scale;
        self.tape().push(
            "dft_l1_loss",
            Tensor::scalar(value),
            &[self],
            Box::new(move |ctx| {
                let g = ctx.grad.item() * scale;
                let mut out = vec![0.0; b * j];
                for (jj, bins) in spectra.iter().enumerate() {
                    // unit phasor per bin; zero-modulus bins take subgradient 0
                    let unit: Vec<(f64, f64)> = bins
                        .iter()
                        .map(|&(r, i)| {
                            let m = r.hypot(i);
                            if m > 0.0 {
                                (g * r / m, g * i / m)
                            } else {
                                (0.0, 0.0)
                            }
                        })
                        .collect();
                    for (t, v) in adjoint_with(&unit, &tw).into_iter().enumerate() {
                        out[t * j + jj] = v;
                    }
                }
                vec![Some(Tensor::new(&[b, j], out).unwrap())]
            }),
        )
    }

    /// `L + β·ln(1 − e^{−L} + ε)` of a non-negative scalar loss.
    pub fn reward_transform(self, beta: f64, epsilon: f64) -> Result<Var<'t>> {
        let l = self.value();
        if l.len() != 1 {
            return Err(Error::dim("reward_transform expects a scalar loss"));
        }
        let l = l.item();
        if !(l >= 0.0) {
            return Err(Error::Contract(format!("reward_transform of negative loss {l}")));
        }
        self.tape().push(
            "reward_transform",
            Tensor::scalar(reward_value(l, beta, epsilon)),
            &[self],
            Box::new(move |ctx| {
                let e = (-l).exp();
                let d = 1.0 + beta * e / (1.0 - e + epsilon);
                vec![Some(Tensor::scalar(ctx.grad.item() * d))]
            }),
        )
    }
}

/// Combined loss of `[B, d_J]` predictions. Returns the differentiable total
/// and the four component scalars plus the total.
pub fn htsr_total<'t>(pred: Var<'t>, target: &Tensor, cfg: &LossConfig) -> Result<(Var<'t>, LossBreakdown)> {
    cfg.validate()?;
    let time = pred.mse_loss(target)?;
    let freq = pred.dft_l1_loss(target)?;
    let time_r = time.reward_transform(cfg.beta, cfg.epsilon)?;
    let freq_r = freq.reward_transform(cfg.beta, cfg.epsilon)?;
    let (t_term, f_term) = if cfg.use_reward { (time_r, freq_r) } else { (time, freq) };
    let total = if cfg.use_freq {
        Var::lincomb(&[(f_term, cfg.alpha), (t_term, 1.0 - cfg.alpha)])?
    } else {
        t_term
    };
    let breakdown = LossBreakdown {
        time: time.item(),
        time_reward: time_r.item(),
        freq: freq.item(),
        freq_reward: freq_r.item(),
        total: total.item(),
    };
    Ok((total, breakdown))
}
