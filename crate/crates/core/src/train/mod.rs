//! Training, evaluation, the ridge floor and paired significance testing.

mod metrics;
mod ridge;
mod stats;
mod trainer;
mod windows;

#[cfg(test)]
mod tests;

pub use metrics::{mae, pearson_r, r2_score, JointMetrics, MetricsReport, Summary};
pub use ridge::{ridge_fit, RidgeModel};
pub use stats::{paired_ttest_one_tailed, RowScaler, Standardizer, TTest};
pub use trainer::{
    batch_gradients, train, train_with_validator, validation_r, BatchGradients, EarlyStopping, EpochRecord, StopReason, TrainConfig, TrainOutcome,
    Verdict,
};
pub use windows::WindowSet;

use crate::error::Result;
use crate::net::Model;
use crate::signal::JOINT_NAMES;

/// Test-set metrics of `model`; predictions and labels are mapped back to
/// physical units with `labels` when given.
pub fn evaluate(model: &Model, set: &WindowSet, chunk: usize, labels: Option<&RowScaler>) -> Result<MetricsReport> {
    let pred = set.predict(model, chunk)?;
    let y = set.targets()?;
    match labels {
        Some(s) => MetricsReport::compute(&s.invert_columns(&y)?, &s.invert_columns(&pred)?, &JOINT_NAMES),
        None => MetricsReport::compute(&y, &pred, &JOINT_NAMES),
    }
}
