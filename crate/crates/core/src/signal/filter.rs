use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Second-order section in transposed direct form II, normalized so `a0 = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    fn design(cutoff: f64, fs: f64, q: f64, highpass: bool) -> Self {
        let w0 = 2.0 * PI * cutoff / fs;
        let (sin, cos) = w0.sin_cos();
        let alpha = sin / (2.0 * q);
        let a0 = 1.0 + alpha;
        let b = if highpass {
            [(1.0 + cos) / 2.0, -(1.0 + cos), (1.0 + cos) / 2.0]
        } else {
            [(1.0 - cos) / 2.0, 1.0 - cos, (1.0 - cos) / 2.0]
        };
        Biquad {
            b: [b[0] / a0, b[1] / a0, b[2] / a0],
            a: [-2.0 * cos / a0, (1.0 - alpha) / a0],
        }
    }

    pub fn lowpass(cutoff: f64, fs: f64, q: f64) -> Self {
        Self::design(cutoff, fs, q, false)
    }

    pub fn highpass(cutoff: f64, fs: f64, q: f64) -> Self {
        Self::design(cutoff, fs, q, true)
    }

    /// Gain at 0 Hz.
    pub fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    /// Filter state that is already at rest for a constant input `x0`.
    fn rest_state(&self, x0: f64) -> [f64; 2] {
        let y = self.dc_gain() * x0;
        [y - self.b[0] * x0, self.b[2] * x0 - self.a[1] * y]
    }

    fn run(&self, x: &mut [f64], mut z: [f64; 2]) {
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        for v in x.iter_mut() {
            let xin = *v;
            let y = b0 * xin + z[0];
            z[0] = b1 * xin - a1 * y + z[1];
            z[1] = b2 * xin - a2 * y;
            *v = y;
        }
    }
}

/// Q factors of the second-order sections of an even-order Butterworth filter.
pub fn butterworth_qs(order: usize) -> Result<Vec<f64>> {
    if order == 0 || order % 2 != 0 {
        return Err(Error::param(format!("Butterworth order must be even and positive, got {order}")));
    }
    Ok((0..order / 2)
        .map(|k| 1.0 / (2.0 * ((2 * k + 1) as f64 * PI / (2 * order) as f64).cos()))
        .collect())
}

/// Causal cascade of biquads applied row by row.
#[derive(Clone, Debug, PartialEq)]
pub struct Cascade {
    pub sections: Vec<Biquad>,
}

impl Cascade {
    pub fn butterworth_lowpass(cutoff: f64, fs: f64, order: usize) -> Result<Self> {
        check_cutoff(cutoff, fs)?;
        let sections = butterworth_qs(order)?
            .into_iter()
            .map(|q| Biquad::lowpass(cutoff, fs, q))
            .collect();
        Ok(Cascade { sections })
    }

    pub fn butterworth_highpass(cutoff: f64, fs: f64, order: usize) -> Result<Self> {
        check_cutoff(cutoff, fs)?;
        let sections = butterworth_qs(order)?
            .into_iter()
            .map(|q| Biquad::highpass(cutoff, fs, q))
            .collect();
        Ok(Cascade { sections })
    }

    pub fn then(mut self, other: Cascade) -> Self {
        self.sections.extend(other.sections);
        self
    }

    /// Filters one signal in place, forward only. The state starts at rest
    /// for the first sample so a constant prefix does not ring.
    pub fn apply(&self, x: &mut [f64]) {
        let Some(&first) = x.first() else { return };
        let mut level = first;
        for s in &self.sections {
            let z = s.rest_state(level);
            level *= s.dc_gain();
            s.run(x, z);
        }
    }

    /// Filters every row of a `[rows, t]` matrix.
    pub fn apply_rows(&self, x: &Tensor) -> Result<Tensor> {
        let [_, t] = matrix_dims(x)?;
        let mut out = x.clone();
        for row in out.data_mut().chunks_exact_mut(t) {
            self.apply(row);
        }
        Ok(out)
    }
}

fn check_cutoff(cutoff: f64, fs: f64) -> Result<()> {
    if !(fs > 0.0) || !(cutoff > 0.0) || cutoff >= fs / 2.0 {
        return Err(Error::param(format!(
            "cutoff {cutoff} Hz must lie in (0, {}) for fs {fs} Hz",
            fs / 2.0
        )));
    }
    Ok(())
}

pub(crate) fn matrix_dims(x: &Tensor) -> Result<[usize; 2]> {
    match x.shape() {
        &[r, c] => Ok([r, c]),
        s => Err(Error::dim(format!("expected a [channels, time] matrix, got {s:?}"))),
    }
}

/// Causal band-pass: high-pass at `lo` followed by low-pass at `hi`, each a
/// Butterworth cascade of the given order.
pub fn bandpass_filter(x: &Tensor, fs: f64, lo: f64, hi: f64, order: usize) -> Result<Tensor> {
    if !(lo < hi) {
        return Err(Error::param(format!("band edges must satisfy lo < hi, got {lo}..{hi}")));
    }
    if hi >= fs / 2.0 {
        return Err(Error::param(format!("upper edge {hi} Hz is not below Nyquist {}", fs / 2.0)));
    }
    let cascade = Cascade::butterworth_highpass(lo, fs, order)?
        .then(Cascade::butterworth_lowpass(hi, fs, order)?);
    cascade.apply_rows(x)
}

/// Integer decimation factor, or an error when the rates do not divide.
pub fn decimation_factor(fs_in: f64, fs_out: f64) -> Result<usize> {
    let ratio = fs_in / fs_out;
    if !(fs_out > 0.0) || !(ratio >= 1.0) || (ratio - ratio.round()).abs() > 1e-9 {
        return Err(Error::param(format!(
            "cannot decimate {fs_in} Hz to {fs_out} Hz by an integer factor"
        )));
    }
    Ok(ratio.round() as usize)
}

/// Keeps samples `0, factor, 2·factor, …` of every row; output length is
/// `⌊t / factor⌋`.
pub fn decimate_rows(x: &Tensor, factor: usize) -> Result<Tensor> {
    let [r, t] = matrix_dims(x)?;
    let t_out = t / factor;
    if t_out == 0 {
        return Err(Error::param(format!("signal of {t} samples is shorter than factor {factor}")));
    }
    let mut out = Vec::with_capacity(r * t_out);
    for row in x.data().chunks_exact(t) {
        out.extend((0..t_out).map(|i| row[i * factor]));
    }
    Tensor::new(&[r, t_out], out)
}

/// Anti-alias low-pass at `0.8 · fs_out / 2`, then decimation.
pub fn downsample(x: &Tensor, fs_in: f64, fs_out: f64, order: usize) -> Result<Tensor> {
    let factor = decimation_factor(fs_in, fs_out)?;
    if factor == 1 {
        return Ok(x.clone());
    }
    let lp = Cascade::butterworth_lowpass(0.8 * fs_out / 2.0, fs_in, order)?;
    decimate_rows(&lp.apply_rows(x)?, factor)
}
