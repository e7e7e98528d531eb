use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{MetricsReport, WindowSet};
use crate::error::{Error, Result};
use crate::loss::{htsr_total, LossBreakdown, LossConfig};
use crate::net::Model;
use crate::signal::JOINT_NAMES;
use crate::tensor::optim::{Adam, AdamConfig};
use crate::tensor::ops::RunningStats;
use crate::tensor::{Mode, Tape, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// Filled from the run configuration's own loss section.
    #[serde(skip)]
    pub loss: LossConfig,
    pub stride: usize,
    /// Batches are runs of consecutive windows; only their order is shuffled.
    pub contiguous: bool,
    /// Windows per forward pass when predicting the validation set.
    pub eval_chunk: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            batch_size: 100,
            max_epochs: 50,
            patience: 30,
            seed: 0,
            loss: LossConfig::default(),
            stride: 1,
            contiguous: true,
            eval_chunk: 256,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate must be positive, got {}", self.lr));
        }
        if self.batch_size < 2 {
            return bad(format!("batch size must be at least 2, got {}", self.batch_size));
        }
        if self.max_epochs == 0 || self.patience > self.max_epochs {
            return bad(format!(
                "need 0 < max_epochs and patience <= max_epochs, got {} / {}",
                self.patience, self.max_epochs
            ));
        }
        if self.stride == 0 {
            return bad("stride must be at least 1".into());
        }
        if self.loss.use_freq && !self.contiguous {
            return bad("the frequency loss needs contiguous batches".into());
        }
        self.loss.validate()
    }
}

/// What the early-stopping rule decided after an epoch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Improved,
    Wait,
    Stop,
}

/// Strict-improvement early stopping on a score to maximize. NaN never
/// improves.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    waited: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::NEG_INFINITY,
            best_epoch: 0,
            waited: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, score: f64) -> Verdict {
        if score > self.best {
            self.best = score;
            self.best_epoch = epoch;
            self.waited = 0;
            return Verdict::Improved;
        }
        self.waited += 1;
        if self.waited >= self.patience {
            Verdict::Stop
        } else {
            Verdict::Wait
        }
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "reason", content = "detail")]
pub enum StopReason {
    MaxEpochs,
    Patience,
    /// Training diverged; the returned model is the last good one.
    NonFinite(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub steps: usize,
    pub train_loss: f64,
    pub val_r: f64,
}

pub struct TrainOutcome {
    /// Best-validation model (or last good one after divergence).
    pub model: Model,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_r: f64,
    pub stop: StopReason,
}

impl TrainOutcome {
    pub fn val_history(&self) -> Vec<f64> {
        self.history.iter().map(|e| e.val_r).collect()
    }
}

#[derive(Serialize)]
struct StepLine<'a> {
    kind: &'a str,
    epoch: usize,
    step: usize,
    #[serde(flatten)]
    loss: LossBreakdown,
}

#[derive(Serialize)]
struct EpochLine<'a> {
    kind: &'a str,
    #[serde(flatten)]
    record: &'a EpochRecord,
    best_epoch: usize,
}

fn is_non_finite(e: &Error) -> Option<String> {
    match e {
        Error::NonFinite(m) => Some(m.clone()),
        Error::Stage { stage, source } => is_non_finite(source).map(|m| format!("{stage}: {m}")),
        _ => None,
    }
}

/// Joint-averaged validation r of `model` on `val` (NaN if undefined).
pub fn validation_r(model: &Model, val: &WindowSet, chunk: usize) -> Result<f64> {
    let pred = val.predict(model, chunk)?;
    Ok(MetricsReport::compute(&val.targets()?, &pred, &JOINT_NAMES)?.mean_r())
}

/// Trains against `validate(model, epoch) -> score`; see [`train`].
pub fn train_with_validator<F>(
    mut model: Model,
    train: &WindowSet,
    cfg: &TrainConfig,
    mut log: Option<&mut dyn Write>,
    mut validate: F,
) -> Result<TrainOutcome>
where
    F: FnMut(&Model, usize) -> Result<f64>,
{
    cfg.validate()?;
    let mut order: Vec<Vec<usize>> = if cfg.contiguous {
        train.contiguous_batches(cfg.batch_size).into_iter().map(|r| r.collect()).collect()
    } else {
        Vec::new()
    };
    if cfg.contiguous && order.is_empty() {
        return Err(Error::DegenerateBatch(train.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    });
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = model.clone();
    let mut history = Vec::new();
    let mut stop = StopReason::MaxEpochs;
    let mut step = 0usize;

    'epochs: for epoch in 1..=cfg.max_epochs {
        let last_good = model.clone();
        if cfg.contiguous {
            order.shuffle(&mut rng);
        } else {
            let mut idx: Vec<usize> = (0..train.len()).collect();
            idx.shuffle(&mut rng);
            order = idx.chunks(cfg.batch_size).filter(|c| c.len() >= 2).map(<[usize]>::to_vec).collect();
        }
        let mut loss_sum = 0.0;
        for batch in &order {
            step += 1;
            match train_step(&mut model, &mut adam, train, batch, cfg, &mut rng) {
                Ok(br) => {
                    loss_sum += br.total;
                    if let Some(w) = log.as_deref_mut() {
                        let line = StepLine { kind: "step", epoch, step, loss: br };
                        writeln!(w, "{}", serde_json::to_string(&line)?)?;
                    }
                }
                Err(e) => match is_non_finite(&e) {
                    Some(msg) => {
                        log::error!("epoch {epoch} step {step}: {msg}; keeping the last good parameters");
                        if stopper.best_epoch() == 0 {
                            best = last_good;
                        }
                        stop = StopReason::NonFinite(format!("epoch {epoch} step {step}: {msg}"));
                        break 'epochs;
                    }
                    None => return Err(e),
                },
            }
        }
        let val_r = validate(&model, epoch)?;
        let record = EpochRecord {
            epoch,
            steps: order.len(),
            train_loss: loss_sum / order.len().max(1) as f64,
            val_r,
        };
        let verdict = stopper.observe(epoch, val_r);
        if verdict == Verdict::Improved {
            best = model.clone();
        }
        log::info!(
            "epoch {epoch}: loss {:.5} val r {val_r:.4} (best {:.4} @ {})",
            record.train_loss,
            stopper.best(),
            stopper.best_epoch()
        );
        if let Some(w) = log.as_deref_mut() {
            let line = EpochLine { kind: "epoch", record: &record, best_epoch: stopper.best_epoch() };
            writeln!(w, "{}", serde_json::to_string(&line)?)?;
        }
        history.push(record);
        if verdict == Verdict::Stop {
            stop = StopReason::Patience;
            break;
        }
    }
    Ok(TrainOutcome {
        model: best,
        history,
        best_epoch: stopper.best_epoch(),
        best_val_r: stopper.best(),
        stop,
    })
}

/// Mini-batch Adam with early stopping on joint-averaged validation r;
/// returns the best-validation model.
pub fn train(
    model: Model,
    train_set: &WindowSet,
    val: &WindowSet,
    cfg: &TrainConfig,
    log: Option<&mut dyn Write>,
) -> Result<TrainOutcome> {
    let chunk = cfg.eval_chunk;
    train_with_validator(model, train_set, cfg, log, |m, _| validation_r(m, val, chunk))
}

/// Gradients of one training-mode batch, in parameter-name order.
pub struct BatchGradients {
    pub loss: LossBreakdown,
    pub grads: Vec<(String, Tensor)>,
    pub bn_updates: Vec<(String, RunningStats)>,
}

/// Train-mode forward and backward pass on one batch without updating
/// the model.
pub fn batch_gradients<R: Rng + ?Sized>(
    model: &Model,
    x: Tensor,
    y: &Tensor,
    loss: &LossConfig,
    rng: &mut R,
) -> Result<BatchGradients> {
    let tape = Tape::new();
    let bound = model.bind(&tape, true);
    let out = model.forward(&bound, tape.constant(x), Mode::Train, rng)?;
    let (total, breakdown) = htsr_total(out.output, y, loss)?;
    let grads = tape.backward(total)?;
    let grads = bound
        .iter()
        .filter(|(_, v)| v.requires_grad())
        .map(|(name, v)| (name.to_string(), grads.wrt(v)))
        .collect();
    Ok(BatchGradients {
        loss: breakdown,
        grads,
        bn_updates: out.bn_updates,
    })
}

fn train_step(
    model: &mut Model,
    adam: &mut Adam,
    set: &WindowSet,
    batch: &[usize],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<LossBreakdown> {
    let (x, y) = set.gather(batch)?;
    let step = batch_gradients(model, x, &y, &cfg.loss, rng)?;
    {
        let trainable = model.params.iter_mut().filter(|(_, p)| p.trainable);
        let mut pairs = Vec::with_capacity(step.grads.len());
        for ((name, p), (gname, g)) in trainable.zip(&step.grads) {
            debug_assert_eq!(name, gname);
            pairs.push((name, &mut p.value, g));
        }
        adam.step(pairs)?;
    }
    model.apply_constraints()?;
    model.apply_bn_updates(step.bn_updates)?;
    Ok(step.loss)
}
