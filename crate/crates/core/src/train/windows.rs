use std::ops::Range;

use crate::error::{Error, Result};
use crate::net::Model;
use crate::signal::{window_starts, TrialRecord};
use crate::tensor::Tensor;

/// Sliding windows over a list of trials, indexed lazily in trial then time
/// order. Labels are the joint angles at each window's last sample.
#[derive(Clone, Debug)]
pub struct WindowSet {
    trials: Vec<TrialRecord>,
    index: Vec<(usize, usize)>,
    window: usize,
    stride: usize,
}

impl WindowSet {
    pub fn new(trials: Vec<TrialRecord>, window: usize, stride: usize) -> Result<Self> {
        if window == 0 || stride == 0 {
            return Err(Error::param(format!("window {window} and stride {stride} must be positive")));
        }
        if let Some(first) = trials.first() {
            if trials
                .iter()
                .any(|t| t.channels != first.channels || t.n_joints() != first.n_joints())
            {
                return Err(Error::config("trials disagree on channels or joints"));
            }
        }
        let mut index = Vec::new();
        for (k, t) in trials.iter().enumerate() {
            if t.len() < window {
                log::warn!("trial {} is shorter than the {window}-sample window", t.trial_id);
            }
            index.extend(window_starts(t.len(), window, stride).into_iter().map(|s| (k, s)));
        }
        Ok(WindowSet {
            trials,
            index,
            window,
            stride,
        })
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn trials(&self) -> &[TrialRecord] {
        &self.trials
    }

    pub fn n_channels(&self) -> usize {
        self.trials.first().map_or(0, TrialRecord::n_channels)
    }

    pub fn n_joints(&self) -> usize {
        self.trials.first().map_or(0, TrialRecord::n_joints)
    }

    /// Window index ranges belonging to each trial.
    pub fn trial_ranges(&self) -> Vec<Range<usize>> {
        let mut out: Vec<Range<usize>> = Vec::new();
        for (i, &(k, _)) in self.index.iter().enumerate() {
            match out.last_mut() {
                Some(r) if self.index[r.start].0 == k => r.end = i + 1,
                _ => out.push(i..i + 1),
            }
        }
        out
    }

    /// Consecutive runs of at most `size` windows that never cross a trial
    /// boundary; runs shorter than 2 are dropped.
    pub fn contiguous_batches(&self, size: usize) -> Vec<Range<usize>> {
        let size = size.max(1);
        self.trial_ranges()
            .into_iter()
            .flat_map(|r| {
                (r.start..r.end)
                    .step_by(size)
                    .map(move |s| s..(s + size).min(r.end))
            })
            .filter(|r| r.len() >= 2)
            .collect()
    }

    /// `[B, C, T]` inputs and `[B, d_J]` labels of the given windows.
    pub fn gather(&self, indices: &[usize]) -> Result<(Tensor, Tensor)> {
        let (c, j, w) = (self.n_channels(), self.n_joints(), self.window);
        let mut x = Vec::with_capacity(indices.len() * c * w);
        let mut y = Vec::with_capacity(indices.len() * j);
        for &i in indices {
            let &(k, s) = self
                .index
                .get(i)
                .ok_or_else(|| Error::param(format!("window {i} out of range")))?;
            let tr = &self.trials[k];
            let t = tr.len();
            for row in tr.eeg.data().chunks_exact(t) {
                x.extend_from_slice(&row[s..s + w]);
            }
            y.extend(tr.joints_at(s + w - 1));
        }
        Ok((
            Tensor::new(&[indices.len(), c, w], x)?,
            Tensor::new(&[indices.len(), j], y)?,
        ))
    }

    pub fn gather_range(&self, r: Range<usize>) -> Result<(Tensor, Tensor)> {
        self.gather(&r.collect::<Vec<_>>())
    }

    /// `[N, d_J]` labels of every window.
    pub fn targets(&self) -> Result<Tensor> {
        let j = self.n_joints();
        let mut y = Vec::with_capacity(self.len() * j);
        for &(k, s) in &self.index {
            y.extend(self.trials[k].joints_at(s + self.window - 1));
        }
        Tensor::new(&[self.len(), j], y)
    }

    /// `[C, T]` input of window `i`.
    pub fn input(&self, i: usize) -> Result<Tensor> {
        Tensor::new(&[self.n_channels(), self.window], self.features(i))
    }

    /// Flattened `C·T` feature row of one window, channel-major.
    pub fn features(&self, i: usize) -> Vec<f64> {
        let (k, s) = self.index[i];
        let tr = &self.trials[k];
        let t = tr.len();
        let mut v = Vec::with_capacity(tr.n_channels() * self.window);
        for row in tr.eeg.data().chunks_exact(t) {
            v.extend_from_slice(&row[s..s + self.window]);
        }
        v
    }

    /// Eval-mode predictions `[N, d_J]` in window order.
    pub fn predict(&self, model: &Model, chunk: usize) -> Result<Tensor> {
        let chunk = chunk.max(1);
        let mut out = Vec::with_capacity(self.len() * model.config.joints);
        let mut start = 0;
        while start < self.len() {
            let end = (start + chunk).min(self.len());
            let (x, _) = self.gather_range(start..end)?;
            out.extend_from_slice(model.predict(&x, chunk)?.data());
            start = end;
        }
        Tensor::new(&[self.len(), model.config.joints], out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trial(t: usize, id: u32) -> TrialRecord {
        TrialRecord::new(
            Tensor::from_fn(&[2, t], |i| i as f64),
            Tensor::from_fn(&[6, t], |i| (i % t) as f64),
            100.0,
            vec!["C3".into(), "C4".into()],
        )
        .unwrap()
        .with_ids(1, 1, id)
    }

    #[test]
    fn batches_stay_inside_trials() {
        let set = WindowSet::new(vec![trial(20, 1), trial(13, 2)], 5, 1).unwrap();
        assert_eq!(set.len(), 16 + 9);
        assert_eq!(set.trial_ranges(), vec![0..16, 16..25]);
        let b = set.contiguous_batches(7);
        assert_eq!(b, vec![0..7, 7..14, 14..16, 16..23, 23..25]);
        let short = set.contiguous_batches(8);
        // 16..24 then a single leftover window that is dropped
        assert_eq!(short, vec![0..8, 8..16, 16..24]);
    }

    #[test]
    fn gather_matches_trial_windows() {
        let tr = trial(20, 1);
        let set = WindowSet::new(vec![tr.clone()], 5, 3).unwrap();
        let (x, y) = set.gather(&[2]).unwrap();
        assert_eq!(x.data(), tr.eeg_window(6, 5).data());
        assert_eq!(y.data(), &tr.joints_at(10)[..]);
        assert_eq!(set.features(2), x.data());
        assert_eq!(set.targets().unwrap().shape(), &[set.len(), 6]);
    }
}
