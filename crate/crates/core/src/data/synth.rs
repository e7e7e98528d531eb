use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::ElectrodeLayout;
use crate::signal::{TrialRecord, JOINT_NAMES};
use crate::tensor::Tensor;

/// 16-channel central subset used by the small benchmark.
pub const SMALL_MONTAGE: [&str; 16] = [
    "F3", "Fz", "F4", "FC1", "FC2", "C3", "C1", "Cz", "C2", "C4", "CP1", "CPz", "CP2", "P3", "Pz", "P4",
];

/// Channels that carry the gait-coupled sources by default.
pub const SOURCE_CHANNELS: [&str; 4] = ["Cz", "FC1", "FC2", "CPz"];

/// Fundamental amplitude (degrees) of hip, knee and ankle.
const JOINT_AMPLITUDE: [f64; 3] = [20.0, 30.0, 12.0];
const HARMONIC_RATIO: [f64; 3] = [1.0, 0.2, 0.1];

/// Parameters of the synthetic walking-EEG generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub channels: Vec<String>,
    pub source_channels: Vec<String>,
    pub duration_s: f64,
    pub fs: f64,
    pub gait_freq: f64,
    pub harmonics: usize,
    /// Source amplitude in microvolts per degree of joint angle.
    pub source_gain: f64,
    pub pink_amp: f64,
    pub rhythm_amp: f64,
    pub rhythm_freq: f64,
    pub white_std: f64,
    /// Amplitude of the gait-locked beta rhythm on source channels.
    pub beta_amp: f64,
    pub beta_freq: f64,
    /// Depth of the gait-phase amplitude modulation of that rhythm, in [0, 1].
    pub beta_depth: f64,
    pub neural_lead_ms: f64,
    /// Relative amplitude of slow cadence fluctuations.
    pub cadence_jitter: f64,
    /// Drives noise and the starting gait phase.
    pub seed: u64,
    /// Drives the mixing gains and joint waveforms shared across trials.
    pub subject_seed: u64,
    /// Explicit `[C][d_J]` gains overriding the random source mixing.
    pub mixing: Option<Vec<Vec<f64>>>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            channels: SMALL_MONTAGE.iter().map(|s| s.to_string()).collect(),
            source_channels: SOURCE_CHANNELS.iter().map(|s| s.to_string()).collect(),
            duration_s: 20.0,
            fs: 1000.0,
            gait_freq: 1.0,
            harmonics: 3,
            source_gain: 0.05,
            pink_amp: 4.0,
            rhythm_amp: 3.0,
            rhythm_freq: 10.0,
            white_std: 2.0,
            beta_amp: 2.0,
            beta_freq: 20.0,
            beta_depth: 0.9,
            neural_lead_ms: 100.0,
            cadence_jitter: 0.05,
            seed: 0,
            subject_seed: 0,
            mixing: None,
        }
    }
}

impl SynthSpec {
    /// Same generator over the full 59-channel montage.
    pub fn full() -> Self {
        SynthSpec {
            channels: ElectrodeLayout::standard_10_10().names().to_vec(),
            ..Self::default()
        }
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn validate(&self, layout: &ElectrodeLayout) -> Result<()> {
        let amps = [
            self.source_gain,
            self.pink_amp,
            self.rhythm_amp,
            self.white_std,
            self.beta_amp,
            self.beta_freq,
            self.cadence_jitter,
        ];
        if amps.iter().any(|a| !(*a >= 0.0)) {
            return Err(Error::Config("synthetic amplitudes must be non-negative".into()));
        }
        if !(self.fs > 0.0) || !(self.duration_s > 0.0) || !(self.gait_freq > 0.0) || self.harmonics == 0 {
            return Err(Error::Config("rate, duration, gait frequency and harmonics must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.beta_depth) {
            return Err(Error::Config("beta modulation depth must lie in [0, 1]".into()));
        }
        if self.cadence_jitter >= 1.0 {
            return Err(Error::Config("cadence jitter must stay below 1".into()));
        }
        layout.subset(&self.channels)?;
        for s in &self.source_channels {
            if !self.channels.contains(s) {
                return Err(Error::Config(format!("source channel `{s}` is not among the generated channels")));
            }
        }
        if let Some(m) = &self.mixing {
            if m.len() != self.n_channels() || m.iter().any(|r| r.len() != JOINT_NAMES.len()) {
                return Err(Error::Config("explicit mixing must be [channels][6]".into()));
            }
        }
        Ok(())
    }

    /// `[C][d_J]` source gains: explicit if given, otherwise random gains on
    /// the source channels and zero elsewhere.
    pub fn mixing_matrix(&self) -> Vec<Vec<f64>> {
        if let Some(m) = &self.mixing {
            return m.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.subject_seed ^ 0x5EED_0001);
        self.channels
            .iter()
            .map(|name| {
                let active = self.source_channels.contains(name);
                (0..JOINT_NAMES.len())
                    .map(|_| {
                        let g: f64 = rng.gen_range(-1.0..1.0);
                        if active {
                            g * self.source_gain
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// Gait phase at which each channel's beta rhythm peaks; `None` off the
    /// source channels.
    pub fn beta_phases(&self) -> Vec<Option<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.subject_seed ^ 0x5EED_0003);
        self.channels
            .iter()
            .map(|name| {
                let phi = rng.gen_range(0.0..2.0 * PI);
                self.source_channels.contains(name).then_some(phi)
            })
            .collect()
    }

    /// Per joint and harmonic `(amplitude, phase)`; right-side joints are
    /// the left waveform delayed by half a cycle.
    pub fn joint_waveforms(&self) -> Vec<Vec<(f64, f64)>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.subject_seed ^ 0x5EED_0002);
        let left: Vec<Vec<(f64, f64)>> = (0..3)
            .map(|j| {
                (0..self.harmonics)
                    .map(|k| {
                        let ratio = HARMONIC_RATIO.get(k).copied().unwrap_or(0.05);
                        let amp = JOINT_AMPLITUDE[j] * ratio * rng.gen_range(0.8..1.2);
                        (amp, rng.gen_range(0.0..2.0 * PI))
                    })
                    .collect()
            })
            .collect();
        let right = left.iter().map(|h| {
            h.iter()
                .enumerate()
                .map(|(k, &(a, p))| (a, p + (k + 1) as f64 * PI))
                .collect()
        });
        left.clone().into_iter().chain(right).collect()
    }
}

fn pink_noise(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    // Kellet's refined 1/f filter on white noise, normalized to unit RMS
    let mut b = [0.0f64; 7];
    let warmup = 5000;
    let mut out = Vec::with_capacity(n);
    for i in 0..n + warmup {
        let w: f64 = rng.sample(StandardNormal);
        b[0] = 0.99886 * b[0] + w * 0.0555179;
        b[1] = 0.99332 * b[1] + w * 0.0750759;
        b[2] = 0.96900 * b[2] + w * 0.1538520;
        b[3] = 0.86650 * b[3] + w * 0.3104856;
        b[4] = 0.55000 * b[4] + w * 0.5329522;
        b[5] = -0.7616 * b[5] - w * 0.0168980;
        let v = b.iter().sum::<f64>() + w * 0.5362;
        b[6] = w * 0.115926;
        if i >= warmup {
            out.push(v);
        }
    }
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    if rms > 0.0 {
        out.iter_mut().for_each(|v| *v /= rms);
    }
    out
}

/// Gait phase (radians of the fundamental) at `n` samples, with slow
/// cadence fluctuations.
fn gait_phase(spec: &SynthSpec, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let start: f64 = rng.gen_range(0.0..2.0 * PI);
    let wobble: Vec<(f64, f64)> = (0..3)
        .map(|_| (rng.gen_range(0.03..0.2), rng.gen_range(0.0..2.0 * PI)))
        .collect();
    let dt = 1.0 / spec.fs;
    let mut phase = Vec::with_capacity(n);
    let mut theta = start;
    for i in 0..n {
        phase.push(theta);
        let t = i as f64 * dt;
        let s: f64 = wobble.iter().map(|(f, p)| (2.0 * PI * f * t + p).sin()).sum::<f64>() / 3f64.sqrt();
        theta += 2.0 * PI * spec.gait_freq * (1.0 + spec.cadence_jitter * s) * dt;
    }
    phase
}

fn joint_value(wave: &[(f64, f64)], theta: f64) -> f64 {
    wave.iter()
        .enumerate()
        .map(|(k, &(a, p))| a * ((k + 1) as f64 * theta + p).sin())
        .sum()
}

/// One synthetic trial. EEG channel `c` is `Σ_j mixing[c][j]·joint_j(t + lead)`,
/// plus on source channels a beta rhythm whose amplitude follows the gait
/// phase, plus pink noise, a 10 Hz rhythm and white noise.
pub fn synth_generate(spec: &SynthSpec) -> Result<TrialRecord> {
    let layout = ElectrodeLayout::standard_10_10();
    spec.validate(&layout)?;
    let n = (spec.duration_s * spec.fs).round() as usize;
    let lead = (spec.neural_lead_ms * spec.fs / 1000.0).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let phase = gait_phase(spec, n + lead, &mut rng);
    let waves = spec.joint_waveforms();
    let d_j = waves.len();

    let mut joints = vec![0.0; d_j * n];
    let mut ahead = vec![0.0; d_j * n];
    for (j, wave) in waves.iter().enumerate() {
        for i in 0..n {
            joints[j * n + i] = joint_value(wave, phase[i]);
            ahead[j * n + i] = joint_value(wave, phase[i + lead]);
        }
    }

    let mixing = spec.mixing_matrix();
    let beta_phases = spec.beta_phases();
    let c = spec.n_channels();
    let mut eeg = vec![0.0; c * n];
    for (ch, row) in eeg.chunks_exact_mut(n).enumerate() {
        for (j, &g) in mixing[ch].iter().enumerate() {
            if g != 0.0 {
                for (v, s) in row.iter_mut().zip(&ahead[j * n..(j + 1) * n]) {
                    *v += g * s;
                }
            }
        }
        if let (Some(phi), true) = (beta_phases[ch], spec.beta_amp > 0.0) {
            // carrier frequency drifts slowly so its phase is not gait-locked
            let mut psi: f64 = rng.gen_range(0.0..2.0 * PI);
            let drift = rng.gen_range(0.05..0.15);
            for (i, v) in row.iter_mut().enumerate() {
                let t = i as f64 / spec.fs;
                let env = 1.0 + spec.beta_depth * (phase[i + lead] - phi).cos();
                *v += spec.beta_amp * env * psi.sin();
                let f = spec.beta_freq * (1.0 + 0.05 * (2.0 * PI * drift * t).sin());
                psi += 2.0 * PI * f / spec.fs;
            }
        }
        if spec.pink_amp > 0.0 {
            for (v, p) in row.iter_mut().zip(pink_noise(n, &mut rng)) {
                *v += spec.pink_amp * p;
            }
        }
        if spec.rhythm_amp > 0.0 {
            let phi: f64 = rng.gen_range(0.0..2.0 * PI);
            let env_f: f64 = rng.gen_range(0.1..0.5);
            for (i, v) in row.iter_mut().enumerate() {
                let t = i as f64 / spec.fs;
                let env = 1.0 + 0.5 * (2.0 * PI * env_f * t).sin();
                *v += spec.rhythm_amp * env * (2.0 * PI * spec.rhythm_freq * t + phi).sin();
            }
        }
        if spec.white_std > 0.0 {
            for v in row.iter_mut() {
                *v += spec.white_std * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
    TrialRecord::new(
        Tensor::new(&[c, n], eeg)?,
        Tensor::new(&[d_j, n], joints)?,
        spec.fs,
        spec.channels.clone(),
    )
}

/// `blocks × trials_per_block` trials of one subject; block and trial ids
/// are 1-based and every trial draws its own noise.
pub fn synth_session(spec: &SynthSpec, blocks: u32, trials_per_block: u32) -> Result<Vec<TrialRecord>> {
    let mut out = Vec::with_capacity((blocks * trials_per_block) as usize);
    for b in 1..=blocks {
        for t in 1..=trials_per_block {
            let trial_spec = SynthSpec {
                seed: spec
                    .seed
                    .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                    .wrapping_add(u64::from(b) * 1000 + u64::from(t)),
                ..spec.clone()
            };
            out.push(synth_generate(&trial_spec)?.with_ids(1, b, t));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    fn quiet() -> SynthSpec {
        SynthSpec {
            beta_amp: 0.0,
            pink_amp: 0.0,
            rhythm_amp: 0.0,
            white_std: 0.0,
            duration_s: 5.0,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn noiseless_channel_tracks_joint_after_lead() {
        let mut mixing = vec![vec![0.0; 6]; 16];
        mixing[0][0] = 1.0;
        let spec = SynthSpec { mixing: Some(mixing), ..quiet() };
        let tr = synth_generate(&spec).unwrap();
        let n = tr.len();
        let lead = 100;
        let eeg = &tr.eeg.data()[..n - lead];
        let joint = &tr.joints.data()[lead..n];
        assert!(corr(eeg, joint) > 0.99);
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let spec = SynthSpec { duration_s: 2.0, seed: 5, ..SynthSpec::default() };
        assert_eq!(synth_generate(&spec).unwrap(), synth_generate(&spec).unwrap());
        let other = SynthSpec { seed: 6, ..spec.clone() };
        assert_ne!(synth_generate(&spec).unwrap(), synth_generate(&other).unwrap());
    }

    #[test]
    fn left_and_right_hips_are_antiphase() {
        let tr = synth_generate(&quiet()).unwrap();
        let n = tr.len();
        let r = corr(&tr.joints.data()[..n], &tr.joints.data()[3 * n..4 * n]);
        assert!(r < -0.9, "r = {r}");
    }

    #[test]
    fn sources_live_on_designated_channels() {
        let spec = SynthSpec::default();
        let m = spec.mixing_matrix();
        for (name, row) in spec.channels.iter().zip(&m) {
            let active = row.iter().any(|&g| g != 0.0);
            assert_eq!(active, SOURCE_CHANNELS.contains(&name.as_str()), "{name}");
        }
    }

    #[test]
    fn beta_envelope_follows_gait_phase() {
        let spec = SynthSpec { beta_amp: 1.0, source_gain: 0.0, ..quiet() };
        let tr = synth_generate(&spec).unwrap();
        let n = tr.len();
        let ch = spec.channels.iter().position(|c| c == "Cz").unwrap();
        let row = &tr.eeg.data()[ch * n..(ch + 1) * n];
        let off = spec.channels.iter().position(|c| c == "F3").unwrap();
        assert!(tr.eeg.data()[off * n..(off + 1) * n].iter().all(|&v| v == 0.0));
        // carrier averages out, power does not
        let mean = row.iter().sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.05, "{mean}");
        let power: Vec<f64> = row.chunks(50).map(|w| w.iter().map(|v| v * v).sum::<f64>() / 50.0).collect();
        let (lo, hi) = power.iter().fold((f64::MAX, 0.0f64), |(a, b), &p| (a.min(p), b.max(p)));
        assert!(hi > 20.0 * lo, "{lo} {hi}");
    }

    #[test]
    fn rejects_bad_specs() {
        let layout = ElectrodeLayout::standard_10_10();
        let neg = SynthSpec { white_std: -1.0, ..SynthSpec::default() };
        assert!(neg.validate(&layout).is_err());
        let deep = SynthSpec { beta_depth: 1.5, ..SynthSpec::default() };
        assert!(deep.validate(&layout).is_err());
        let missing = SynthSpec { source_channels: vec!["O1".into()], ..SynthSpec::default() };
        assert!(missing.validate(&layout).is_err());
        assert_eq!(SynthSpec::full().n_channels(), 59);
    }
}
