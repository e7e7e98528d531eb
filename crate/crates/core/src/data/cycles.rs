use std::io::Write;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CYCLE_POINTS: usize = 400;

/// One gait cycle resampled to [`CYCLE_POINTS`] samples per joint.
#[derive(Clone, Debug, PartialEq)]
pub struct GaitCycle {
    /// `[d_J, 400]`.
    pub curves: Tensor,
    pub start: usize,
    pub end: usize,
}

/// Peak-picking thresholds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PeakCriteria {
    pub min_distance_s: f64,
    /// Minimum prominence as a fraction of the peak-to-peak range.
    pub prominence_frac: f64,
}

impl Default for PeakCriteria {
    fn default() -> Self {
        PeakCriteria {
            min_distance_s: 0.5,
            prominence_frac: 0.1,
        }
    }
}

/// Local maxima (first sample of a flat top) excluding the end points.
fn local_maxima(x: &[f64]) -> Vec<usize> {
    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < x.len() {
        if x[i] > x[i - 1] {
            let mut j = i;
            while j + 1 < x.len() && x[j + 1] == x[i] {
                j += 1;
            }
            if j + 1 < x.len() && x[j + 1] < x[i] {
                peaks.push(i);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    peaks
}

/// Height of a peak above the higher of the two bases reached before a
/// taller sample (or the signal edge) on either side.
fn prominence(x: &[f64], p: usize) -> f64 {
    let h = x[p];
    let mut left_min = h;
    for &v in x[..p].iter().rev() {
        if v > h {
            break;
        }
        left_min = left_min.min(v);
    }
    let mut right_min = h;
    for &v in &x[p + 1..] {
        if v > h {
            break;
        }
        right_min = right_min.min(v);
    }
    h - left_min.max(right_min)
}

/// Peak indices of the knee angle that pass the prominence and spacing
/// criteria; taller peaks win spacing conflicts.
pub fn detect_peaks(knee: &[f64], fs: f64, crit: &PeakCriteria) -> Vec<usize> {
    let (lo, hi) = knee.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let range = hi - lo;
    if !(range > 0.0) {
        return Vec::new();
    }
    let candidates: Vec<usize> = local_maxima(knee)
        .into_iter()
        .filter(|&p| prominence(knee, p) >= crit.prominence_frac * range)
        .collect();
    let min_dist = (crit.min_distance_s * fs).ceil() as usize;
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| knee[candidates[b]].total_cmp(&knee[candidates[a]]).then(a.cmp(&b)));
    let mut keep = vec![true; candidates.len()];
    for &i in &order {
        if !keep[i] {
            continue;
        }
        for (j, k) in keep.iter_mut().enumerate() {
            if j != i && candidates[j].abs_diff(candidates[i]) < min_dist {
                *k = false;
            }
        }
    }
    candidates.into_iter().zip(keep).filter_map(|(p, k)| k.then_some(p)).collect()
}

/// Consecutive peak pairs `(start, end)` of the left knee angle.
pub fn segment_gait_cycles(knee: &[f64], fs: f64, crit: &PeakCriteria) -> Vec<(usize, usize)> {
    detect_peaks(knee, fs, crit).windows(2).map(|w| (w[0], w[1])).collect()
}

/// Linear interpolation of every row of `[d_J, len]` onto 400 points with
/// both end samples kept exactly.
pub fn normalize_cycle(samples: &Tensor, start: usize, end: usize) -> Result<GaitCycle> {
    let (rows, len) = match samples.shape() {
        &[r, l] => (r, l),
        s => return Err(Error::dim(format!("cycle must be [joints, samples], got {s:?}"))),
    };
    if len < 2 {
        return Err(Error::DegenerateTest(format!("cycle of {len} samples cannot be resampled")));
    }
    let mut out = Vec::with_capacity(rows * CYCLE_POINTS);
    for row in samples.data().chunks_exact(len) {
        for i in 0..CYCLE_POINTS {
            let pos = i as f64 * (len - 1) as f64 / (CYCLE_POINTS - 1) as f64;
            let k = (pos.floor() as usize).min(len - 2);
            let frac = pos - k as f64;
            let v = if frac == 0.0 {
                row[k]
            } else if i == CYCLE_POINTS - 1 {
                row[len - 1]
            } else {
                row[k] + frac * (row[k + 1] - row[k])
            };
            out.push(v);
        }
    }
    Ok(GaitCycle {
        curves: Tensor::new(&[rows, CYCLE_POINTS], out)?,
        start,
        end,
    })
}

/// Columns `start..=end` of a `[d_J, t]` matrix, normalized.
pub fn extract_cycle(signal: &Tensor, start: usize, end: usize) -> Result<GaitCycle> {
    let t = signal.shape()[1];
    let rows = signal.shape()[0];
    let mut v = Vec::with_capacity(rows * (end - start + 1));
    for row in signal.data().chunks_exact(t) {
        v.extend_from_slice(&row[start..=end]);
    }
    normalize_cycle(&Tensor::new(&[rows, end - start + 1], v)?, start, end)
}

/// `cycle_id,joint,v0,…,v399`.
pub fn write_cycles_csv<W: Write>(cycles: &[GaitCycle], joints: &[&str], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["cycle_id".to_string(), "joint".to_string()];
    header.extend((0..CYCLE_POINTS).map(|i| format!("v{i}")));
    w.write_record(&header)?;
    for (id, c) in cycles.iter().enumerate() {
        for (j, row) in c.curves.data().chunks_exact(CYCLE_POINTS).enumerate() {
            let mut rec = vec![id.to_string(), joints.get(j).map_or(j.to_string(), |s| s.to_string())];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One row of the actual-vs-predicted cycle overlay.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct OverlayRow {
    pub joint: String,
    pub phase_index: usize,
    pub actual_mean: f64,
    pub actual_sd: f64,
    pub pred_mean: f64,
    pub pred_sd: f64,
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, var.sqrt())
}

/// Segments each `(actual, pred)` pair on the knee row of `actual`, cuts
/// `pred` at the same boundaries and reports per-phase mean and sd across
/// all cycles. Pairs are `[d_J, T]` and cycles never span two pairs.
pub fn cycle_overlay(
    segments: &[(Tensor, Tensor)],
    fs: f64,
    knee_row: usize,
    joints: &[&str],
) -> Result<Vec<OverlayRow>> {
    let mut a = Vec::new();
    let mut p = Vec::new();
    let mut rows_j = None;
    for (actual, pred) in segments {
        if actual.shape() != pred.shape() || actual.ndim() != 2 {
            return Err(Error::dim(format!("overlay of {:?} and {:?}", actual.shape(), pred.shape())));
        }
        if *rows_j.get_or_insert(actual.shape()[0]) != actual.shape()[0] {
            return Err(Error::dim("overlay segments disagree on the joint count"));
        }
        if knee_row >= actual.shape()[0] {
            return Err(Error::Parameter(format!("knee row {knee_row} out of {} rows", actual.shape()[0])));
        }
        let t = actual.shape()[1];
        let knee = &actual.data()[knee_row * t..(knee_row + 1) * t];
        for (s, e) in segment_gait_cycles(knee, fs, &PeakCriteria::default()) {
            a.push(extract_cycle(actual, s, e)?);
            p.push(extract_cycle(pred, s, e)?);
        }
    }
    if a.is_empty() {
        return Ok(Vec::new());
    }
    let n_joints = rows_j.unwrap_or(0);
    let mut rows = Vec::new();
    for j in 0..n_joints {
        for i in 0..CYCLE_POINTS {
            let col = |cs: &[GaitCycle]| cs.iter().map(|c| c.curves.at(&[j, i])).collect::<Vec<_>>();
            let (am, asd) = mean_sd(&col(&a));
            let (pm, psd) = mean_sd(&col(&p));
            rows.push(OverlayRow {
                joint: joints.get(j).map_or(j.to_string(), |s| s.to_string()),
                phase_index: i,
                actual_mean: am,
                actual_sd: asd,
                pred_mean: pm,
                pred_sd: psd,
            });
        }
    }
    Ok(rows)
}

/// `joint,phase_index,actual_mean,actual_sd,pred_mean,pred_sd` rows.
pub fn write_overlay_csv<W: Write>(rows: &[OverlayRow], mut writer: W) -> Result<()> {
    writeln!(writer, "joint,phase_index,actual_mean,actual_sd,pred_mean,pred_sd")?;
    for r in rows {
        writeln!(
            writer,
            "{},{},{},{},{},{}",
            r.joint, r.phase_index, r.actual_mean, r.actual_sd, r.pred_mean, r.pred_sd
        )?;
    }
    Ok(())
}
