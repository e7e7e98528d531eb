use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::TrialRecord;

/// Train/validation/test partition of trials (or of one session's samples).
#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub train: Vec<TrialRecord>,
    pub val: Vec<TrialRecord>,
    pub test: Vec<TrialRecord>,
}

/// Split policies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum SplitSpec {
    /// Blocks 1..=2 train; the last block is cut at trial boundaries.
    /// `None` scales the 20/25/40 boundaries to the block size.
    Ged {
        train_end: Option<usize>,
        val_end: Option<usize>,
    },
    /// Contiguous 67.5 / 7.5 / 25 % cut of one session.
    Mobi,
    /// Contiguous cut with custom fractions.
    Fraction { train: f64, val: f64 },
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec::Ged {
            train_end: None,
            val_end: None,
        }
    }
}

impl SplitSpec {
    pub fn apply(&self, trials: &[TrialRecord]) -> Result<Split> {
        match *self {
            SplitSpec::Ged { train_end, val_end } => {
                let n3 = trials.iter().filter(|t| t.block_id == 3).count();
                let b = match (train_end, val_end) {
                    (Some(a), Some(v)) => GedBoundaries { train_end: a, val_end: v, total: n3 },
                    _ => GedBoundaries::proportional(n3),
                };
                split_ged(trials, &b)
            }
            SplitSpec::Mobi | SplitSpec::Fraction { .. } => {
                let (tr, va) = match *self {
                    SplitSpec::Fraction { train, val } => (train, val),
                    _ => (MOBI_TRAIN, MOBI_VAL),
                };
                let session = TrialRecord::concat(trials)?;
                split_fraction(&session, tr, va)
            }
        }
    }
}

/// 1-based trial boundaries inside the third block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GedBoundaries {
    /// Last training trial.
    pub train_end: usize,
    /// Last validation trial.
    pub val_end: usize,
    /// Trials the block must contain.
    pub total: usize,
}

impl GedBoundaries {
    pub const FULL: GedBoundaries = GedBoundaries { train_end: 20, val_end: 25, total: 40 };

    /// The 20/25/40 boundaries scaled to a block of `n` trials.
    pub fn proportional(n: usize) -> Self {
        let scale = |b: usize| ((b * n) as f64 / 40.0).round() as usize;
        GedBoundaries {
            train_end: scale(20),
            val_end: scale(25),
            total: n,
        }
    }
}

/// Blocks 1–2 plus the first trials of block 3 train; the next trials of
/// block 3 validate; the remaining ones test.
pub fn split_ged(trials: &[TrialRecord], b: &GedBoundaries) -> Result<Split> {
    let mut counts = [0usize; 3];
    for t in trials {
        match t.block_id {
            1..=3 => counts[t.block_id as usize - 1] += 1,
            other => return Err(Error::Split(format!("unexpected block {other}"))),
        }
    }
    if counts.iter().any(|&c| c == 0)
        || counts[2] < b.total
        || !(0 < b.train_end && b.train_end < b.val_end && b.val_end < b.total)
    {
        return Err(Error::Split(format!(
            "need 3 non-empty blocks with {} trials in block 3 and 0 < {} < {} < {}; have counts {:?}",
            b.total, b.train_end, b.val_end, b.total, counts
        )));
    }
    let mut third: Vec<&TrialRecord> = trials.iter().filter(|t| t.block_id == 3).collect();
    third.sort_by_key(|t| t.trial_id);
    let mut split = Split {
        train: trials.iter().filter(|t| t.block_id < 3).cloned().collect(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for (pos, t) in third.into_iter().enumerate().take(b.total) {
        let k = pos + 1;
        let dst = if k <= b.train_end {
            &mut split.train
        } else if k <= b.val_end {
            &mut split.val
        } else {
            &mut split.test
        };
        dst.push(t.clone());
    }
    check_disjoint(&split)?;
    Ok(split)
}

pub const MOBI_TRAIN: f64 = 13.5 / 20.0;
pub const MOBI_VAL: f64 = 1.5 / 20.0;

/// Sample ranges `(train, val, test)` of a contiguous fractional cut.
pub fn fraction_ranges(len: usize, train: f64, val: f64) -> Result<[std::ops::Range<usize>; 3]> {
    if !(train > 0.0 && val > 0.0 && train + val < 1.0) {
        return Err(Error::Split(format!("fractions {train} / {val} leave no valid partition")));
    }
    let a = (len as f64 * train).round() as usize;
    let b = (len as f64 * (train + val)).round() as usize;
    if a == 0 || b <= a || b >= len {
        return Err(Error::Split(format!("session of {len} samples is too short to split")));
    }
    Ok([0..a, a..b, b..len])
}

/// Contiguous temporal split of one session.
pub fn split_fraction(session: &TrialRecord, train: f64, val: f64) -> Result<Split> {
    let [a, b, c] = fraction_ranges(session.len(), train, val)?;
    Ok(Split {
        train: vec![session.slice(a.start, a.end)?],
        val: vec![session.slice(b.start, b.end)?],
        test: vec![session.slice(c.start, c.end)?],
    })
}

/// 13.5 / 1.5 / 5 minute proportions of a 20-minute session.
pub fn split_mobi(session: &TrialRecord) -> Result<Split> {
    split_fraction(session, MOBI_TRAIN, MOBI_VAL)
}

fn check_disjoint(split: &Split) -> Result<()> {
    let mut seen = BTreeSet::new();
    for t in split.train.iter().chain(&split.val).chain(&split.test) {
        if !seen.insert((t.session_id, t.block_id, t.trial_id)) {
            return Err(Error::Split(format!(
                "trial {}/{}/{} assigned twice",
                t.session_id, t.block_id, t.trial_id
            )));
        }
    }
    Ok(())
}
