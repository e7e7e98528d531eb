use super::TrialRecord;
use crate::tensor::Tensor;

/// One input window and the joint angles at its last sample.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowSample {
    pub x: Tensor,
    pub y: Vec<f64>,
    pub t_end: usize,
}

/// Start indices `0, stride, …` of every full window of length `len`.
pub fn window_starts(t: usize, len: usize, stride: usize) -> Vec<usize> {
    assert!(stride >= 1, "stride must be at least 1");
    if len == 0 || len > t {
        return Vec::new();
    }
    (0..=t - len).step_by(stride).collect()
}

/// Materializes the windows of a trial. Trials shorter than `len` yield no
/// windows (with a warning).
pub fn sliding_windows(trial: &TrialRecord, len: usize, stride: usize) -> Vec<WindowSample> {
    let t = trial.len();
    if len > t {
        log::warn!(
            "trial {} has {t} samples, shorter than the {len}-sample window",
            trial.trial_id
        );
    }
    window_starts(t, len, stride)
        .into_iter()
        .map(|i| WindowSample {
            x: trial.eeg_window(i, len),
            y: trial.joints_at(i + len - 1),
            t_end: i + len - 1,
        })
        .collect()
}
