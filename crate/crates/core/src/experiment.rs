//! Run configuration and the synthetic benchmark pipeline.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::{saliency_map, SaliencyMap};
use crate::data::{cycle_overlay, synth_session, OverlayRow, SplitSpec, SynthSpec};
use crate::error::{Error, Result};
use crate::graph::{AdjacencySpec, ElectrodeLayout};
use crate::loss::{LossConfig, LossKind};
use crate::net::{Model, ModelConfig};
use crate::signal::{preprocess, PrepConfig, TrialRecord};
use crate::tensor::Tensor;
use crate::train::{evaluate, ridge_fit, train, MetricsReport, Standardizer, TrainConfig, TrainOutcome, WindowSet};

/// Blocks and trials generated for one synthetic session.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionSpec {
    pub blocks: u32,
    pub trials_per_block: u32,
}

impl Default for SessionSpec {
    fn default() -> Self {
        SessionSpec {
            blocks: 3,
            trials_per_block: 8,
        }
    }
}

/// Row of the left knee, whose peaks delimit gait cycles.
const KNEE_ROW: usize = 1;

/// Everything a run needs, serialized as one JSON document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub train: TrainConfig,
    pub split: SplitSpec,
    pub synth: SynthSpec,
    pub prep: PrepConfig,
    pub session: SessionSpec,
    pub ridge_lambda: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::benchmark()
    }
}

impl RunConfig {
    /// 16-channel, 8-minute synthetic benchmark.
    pub fn benchmark() -> Self {
        let model = ModelConfig {
            channels: 16,
            window: 81,
            temporal_filters: 8,
            fusion_filters: vec![16, 32],
            attn_heads: 2,
            attn_dim: 16,
            ..ModelConfig::default()
        };
        RunConfig {
            model,
            loss: LossConfig::default(),
            train: TrainConfig {
                stride: 5,
                max_epochs: 10,
                patience: 10,
                ..TrainConfig::default()
            },
            split: SplitSpec::default(),
            synth: SynthSpec::default(),
            prep: PrepConfig::default(),
            session: SessionSpec::default(),
            ridge_lambda: 1.0,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn with_loss(mut self, kind: LossKind) -> Self {
        self.loss = LossConfig::for_kind(kind);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.train.seed = seed;
        self.synth.seed = seed;
        self
    }

    /// Training settings with the run's loss section applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            loss: self.loss,
            ..self.train.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train_config().validate()?;
        self.synth.validate(&ElectrodeLayout::standard_10_10())?;
        if self.model.channels != self.synth.n_channels() {
            return Err(Error::Config(format!(
                "model expects {} channels but the generator produces {}",
                self.model.channels,
                self.synth.n_channels()
            )));
        }
        if !(self.ridge_lambda > 0.0) {
            return Err(Error::Config(format!("ridge lambda must be positive, got {}", self.ridge_lambda)));
        }
        Ok(())
    }
}

/// Windowed, standardized train/validation/test data of one session.
pub struct PreparedData {
    pub train: WindowSet,
    pub val: WindowSet,
    pub test: WindowSet,
    pub scaler: Standardizer,
    pub layout: ElectrodeLayout,
    pub adjacency: AdjacencySpec,
}

/// Preprocesses raw trials with the montage, splits, z-scores with
/// training statistics and windows every part.
pub fn prepare_trials(cfg: &RunConfig, raw: &[TrialRecord]) -> Result<PreparedData> {
    let montage = ElectrodeLayout::standard_10_10();
    let channels = &raw.first().ok_or_else(|| Error::Split("no trials".into()))?.channels;
    let layout = montage.subset(channels)?;
    if channels.len() != cfg.model.channels {
        return Err(Error::Config(format!(
            "model expects {} channels but the recordings have {}",
            cfg.model.channels,
            channels.len()
        )));
    }
    let processed = crate::exec::map_indexed(raw.len(), |i| preprocess(&raw[i], &montage, &cfg.prep))
        .into_iter()
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.in_stage("prep"))?;
    let split = cfg.split.apply(&processed)?;
    let scaler = Standardizer::fit(&split.train)?;
    let (w, s) = (cfg.model.window, cfg.train.stride);
    let make = |trials: &[TrialRecord]| WindowSet::new(scaler.apply_all(trials)?, w, s);
    let data = PreparedData {
        train: make(&split.train)?,
        val: make(&split.val)?,
        test: make(&split.test)?,
        adjacency: AdjacencySpec::from_layout(&layout, cfg.prep.laplacian_radius_mm)?,
        scaler,
        layout,
    };
    if data.train.is_empty() || data.val.len() < 2 || data.test.len() < 2 {
        return Err(Error::Split(format!(
            "windowing left {} / {} / {} windows",
            data.train.len(),
            data.val.len(),
            data.test.len()
        )));
    }
    Ok(data)
}

/// Generates the synthetic session described by `cfg` and prepares it.
pub fn prepare(cfg: &RunConfig) -> Result<PreparedData> {
    cfg.validate()?;
    let raw = synth_session(&cfg.synth, cfg.session.blocks, cfg.session.trials_per_block)?;
    prepare_trials(cfg, &raw)
}

pub struct RunResult {
    /// Test metrics in physical units.
    pub metrics: MetricsReport,
    pub outcome: TrainOutcome,
}

/// Fresh model, training with early stopping, test evaluation.
pub fn run_training(cfg: &RunConfig, data: &PreparedData, log: Option<&mut dyn Write>) -> Result<RunResult> {
    let model = Model::new(cfg.model.clone(), &data.adjacency.prior, cfg.train.seed)?;
    let tc = cfg.train_config();
    let outcome = train(model, &data.train, &data.val, &tc, log)?;
    let mut metrics = evaluate(&outcome.model, &data.test, tc.eval_chunk, Some(&data.scaler.joints))?;
    metrics.val_history = outcome.val_history();
    metrics.seed = Some(cfg.train.seed);
    Ok(RunResult { metrics, outcome })
}

/// Ridge floor on the same windows, in physical units.
pub fn ridge_report(data: &PreparedData, lambda: f64) -> Result<MetricsReport> {
    let ridge = ridge_fit(&data.train, lambda)?;
    let s = &data.scaler.joints;
    MetricsReport::compute(
        &s.invert_columns(&data.test.targets()?)?,
        &s.invert_columns(&ridge.predict(&data.test)?)?,
        &crate::signal::JOINT_NAMES,
    )
}

fn columns_to_rows(m: &Tensor) -> Tensor {
    let (n, j) = (m.shape()[0], m.shape()[1]);
    Tensor::from_fn(&[j, n], |idx| m.data()[(idx % n) * j + idx / n])
}

/// Actual versus predicted test trajectories over 400-point gait cycles,
/// predicting every sample of each test trial.
pub fn cycle_report(model: &Model, data: &PreparedData, chunk: usize) -> Result<Vec<OverlayRow>> {
    let s = &data.scaler.joints;
    let mut segments = Vec::new();
    for trial in data.test.trials() {
        let set = WindowSet::new(vec![trial.clone()], data.test.window(), 1)?;
        if set.len() < 2 {
            continue;
        }
        let actual = s.invert_columns(&set.targets()?)?;
        let pred = s.invert_columns(&set.predict(model, chunk)?)?;
        segments.push((columns_to_rows(&actual), columns_to_rows(&pred)));
    }
    let fs = data.test.trials().first().map_or(1.0, |t| t.fs);
    cycle_overlay(&segments, fs, KNEE_ROW, &crate::signal::JOINT_NAMES)
}

/// Saliency over at most `max_windows` test windows spread evenly.
pub fn saliency_report(model: &Model, data: &PreparedData, max_windows: usize, chunk: usize) -> Result<SaliencyMap> {
    let n = data.test.len();
    let take = max_windows.clamp(1, n.max(1));
    let windows = (0..take)
        .map(|k| data.test.input(k * n / take))
        .collect::<Result<Vec<_>>>()?;
    saliency_map(model, &windows, data.layout.names(), chunk)
}
