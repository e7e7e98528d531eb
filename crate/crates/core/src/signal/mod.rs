//! EEG preprocessing: causal band-pass, common average reference,
//! anti-aliased downsampling, surface Laplacian and windowing.

mod filter;
mod spatial;
mod window;

use serde::{Deserialize, Serialize};

pub use filter::{
    bandpass_filter, butterworth_qs, decimate_rows, decimation_factor, downsample, Biquad, Cascade,
};
pub use spatial::{common_average_reference, laplacian_filter, laplacian_neighbors};
pub use window::{sliding_windows, window_starts, WindowSample};

use crate::error::{Error, Result};
use crate::graph::{ElectrodeLayout, NEIGHBOR_RADIUS_MM};
use crate::tensor::Tensor;

/// Joint order of the kinematic targets.
pub const JOINT_NAMES: [&str; 6] = ["lhip", "lknee", "lankle", "rhip", "rknee", "rankle"];

/// One walking trial: EEG `[C, t]` in microvolts and joint angles `[d_J, t]`
/// in degrees sharing a sample clock.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub eeg: Tensor,
    pub joints: Tensor,
    pub fs: f64,
    pub channels: Vec<String>,
    pub session_id: u32,
    pub block_id: u32,
    pub trial_id: u32,
}

impl TrialRecord {
    pub fn new(eeg: Tensor, joints: Tensor, fs: f64, channels: Vec<String>) -> Result<Self> {
        if eeg.ndim() != 2 || joints.ndim() != 2 {
            return Err(Error::dim("eeg and joints must both be [rows, time] matrices"));
        }
        if eeg.shape()[1] != joints.shape()[1] {
            return Err(Error::dim(format!(
                "eeg has {} samples but joints have {}",
                eeg.shape()[1],
                joints.shape()[1]
            )));
        }
        if channels.len() != eeg.shape()[0] {
            return Err(Error::dim(format!(
                "{} channel names for {} eeg rows",
                channels.len(),
                eeg.shape()[0]
            )));
        }
        if !(fs > 0.0) {
            return Err(Error::param(format!("sample rate must be positive, got {fs}")));
        }
        eeg.check_finite("eeg")?;
        joints.check_finite("joints")?;
        Ok(TrialRecord {
            eeg,
            joints,
            fs,
            channels,
            session_id: 0,
            block_id: 0,
            trial_id: 0,
        })
    }

    pub fn with_ids(mut self, session: u32, block: u32, trial: u32) -> Self {
        self.session_id = session;
        self.block_id = block;
        self.trial_id = trial;
        self
    }

    /// Number of samples.
    pub fn len(&self) -> usize {
        self.eeg.shape()[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_channels(&self) -> usize {
        self.eeg.shape()[0]
    }

    pub fn n_joints(&self) -> usize {
        self.joints.shape()[0]
    }

    /// EEG columns `start..start + len` as a `[C, len]` matrix.
    pub fn eeg_window(&self, start: usize, len: usize) -> Tensor {
        let t = self.len();
        let mut out = Vec::with_capacity(self.n_channels() * len);
        for row in self.eeg.data().chunks_exact(t) {
            out.extend_from_slice(&row[start..start + len]);
        }
        Tensor::new(&[self.n_channels(), len], out).expect("window within trial")
    }

    /// Joint vector at sample `i`.
    pub fn joints_at(&self, i: usize) -> Vec<f64> {
        let t = self.len();
        (0..self.n_joints()).map(|j| self.joints.data()[j * t + i]).collect()
    }

    /// Samples `start..end` as a new trial with the same identifiers.
    pub fn slice(&self, start: usize, end: usize) -> Result<TrialRecord> {
        if start >= end || end > self.len() {
            return Err(Error::param(format!("bad slice {start}..{end} of {} samples", self.len())));
        }
        let cut = |m: &Tensor| {
            let t = m.shape()[1];
            let rows = m.shape()[0];
            let mut v = Vec::with_capacity(rows * (end - start));
            for row in m.data().chunks_exact(t) {
                v.extend_from_slice(&row[start..end]);
            }
            Tensor::new(&[rows, end - start], v)
        };
        Ok(TrialRecord {
            eeg: cut(&self.eeg)?,
            joints: cut(&self.joints)?,
            ..self.clone()
        })
    }

    /// Concatenates trials along time (channel sets and rates must agree).
    pub fn concat(trials: &[TrialRecord]) -> Result<TrialRecord> {
        let first = trials.first().ok_or_else(|| Error::param("nothing to concatenate"))?;
        for tr in trials {
            if tr.channels != first.channels || tr.fs != first.fs || tr.n_joints() != first.n_joints() {
                return Err(Error::config("concatenated trials disagree on channels, joints or rate"));
            }
        }
        let total: usize = trials.iter().map(TrialRecord::len).sum();
        let join = |get: fn(&TrialRecord) -> &Tensor| {
            let rows = get(first).shape()[0];
            let mut v = Vec::with_capacity(rows * total);
            for r in 0..rows {
                for tr in trials {
                    let t = tr.len();
                    v.extend_from_slice(&get(tr).data()[r * t..(r + 1) * t]);
                }
            }
            Tensor::new(&[rows, total], v)
        };
        Ok(TrialRecord {
            eeg: join(|t| &t.eeg)?,
            joints: join(|t| &t.joints)?,
            ..first.clone()
        })
    }
}

/// Preprocessing parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrepConfig {
    pub band_lo_hz: f64,
    pub band_hi_hz: f64,
    pub filter_order: usize,
    pub fs_out: f64,
    pub laplacian_radius_mm: f64,
}

impl Default for PrepConfig {
    fn default() -> Self {
        PrepConfig {
            band_lo_hz: 0.1,
            band_hi_hz: 48.0,
            filter_order: 4,
            fs_out: 100.0,
            laplacian_radius_mm: NEIGHBOR_RADIUS_MM,
        }
    }
}

/// Band-pass → common average → downsample → Laplacian. Joint angles are
/// decimated at the same sample indices as the EEG.
pub fn preprocess(trial: &TrialRecord, layout: &ElectrodeLayout, cfg: &PrepConfig) -> Result<TrialRecord> {
    let eeg = bandpass_filter(&trial.eeg, trial.fs, cfg.band_lo_hz, cfg.band_hi_hz, cfg.filter_order)?;
    let eeg = common_average_reference(&eeg)?;
    let factor = decimation_factor(trial.fs, cfg.fs_out)?;
    let eeg = downsample(&eeg, trial.fs, cfg.fs_out, cfg.filter_order)?;
    let joints = decimate_rows(&trial.joints, factor)?;
    let eeg = laplacian_filter(&eeg, &trial.channels, layout, cfg.laplacian_radius_mm)?;
    Ok(TrialRecord {
        eeg,
        joints,
        fs: trial.fs / factor as f64,
        ..trial.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pipeline_keeps_channels_and_alignment() {
        let layout = ElectrodeLayout::standard_10_10();
        let names: Vec<String> = ["Cz", "C1", "C2", "FCz"].iter().map(|s| s.to_string()).collect();
        let t = 2000;
        let eeg = Tensor::from_fn(&[4, t], |i| ((i % t) as f64 * 0.01 + (i / t) as f64).sin());
        let joints = Tensor::from_fn(&[6, t], |i| (i % t) as f64);
        let trial = TrialRecord::new(eeg, joints, 1000.0, names).unwrap();
        let out = preprocess(&trial, &layout, &PrepConfig::default()).unwrap();
        assert_eq!(out.eeg.shape(), &[4, 200]);
        assert_eq!(out.fs, 100.0);
        // joint sample k of the output is raw sample 10·k
        assert_eq!(out.joints_at(17)[0], 170.0);
    }

    #[test]
    fn slice_and_concat_round_trip() {
        let trial = TrialRecord::new(
            Tensor::from_fn(&[2, 10], |i| i as f64),
            Tensor::from_fn(&[6, 10], |i| -(i as f64)),
            100.0,
            vec!["A".into(), "B".into()],
        )
        .unwrap();
        let parts = [trial.slice(0, 4).unwrap(), trial.slice(4, 10).unwrap()];
        assert_eq!(TrialRecord::concat(&parts).unwrap(), trial);
    }
}
