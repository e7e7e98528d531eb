//! Central finite-difference gradient checking.

use serde::{Deserialize, Serialize};

use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// One row of a gradient-check table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub name: String,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn new(name: impl Into<String>, max_rel_error: f64, tolerance: f64) -> Self {
        GradCheckReport {
            name: name.into(),
            max_rel_error,
            tolerance,
            passed: max_rel_error < tolerance,
        }
    }
}

/// Largest relative error between `analytic` and the central difference
/// `(f(θ+h) − f(θ−h)) / 2h`, over the listed coordinates (all when `None`).
/// Relative error is `|a − n| / max(1, |a|)`.
///
/// `f` must be smooth near `theta`; kinks (ReLU at 0, `|θ|` at 0, max-pool
/// ties) give meaningless numeric derivatives.
pub fn finite_difference_check<F>(
    mut f: F,
    theta: &Tensor,
    analytic: &Tensor,
    h: f64,
    coords: Option<&[usize]>,
) -> Result<f64>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::param("finite-difference step must be positive"));
    }
    if theta.shape() != analytic.shape() {
        return Err(Error::dim("analytic gradient shape differs from parameter"));
    }
    let all: Vec<usize>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = (0..theta.len()).collect();
            &all
        }
    };
    let mut probe = theta.clone();
    let mut worst: f64 = 0.0;
    for &i in coords {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = f(&probe)?;
        probe.data_mut()[i] = orig - h;
        let down = f(&probe)?;
        probe.data_mut()[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite(format!("objective at coordinate {i}")));
        }
        let numeric = (up - down) / (2.0 * h);
        let a = analytic.data()[i];
        worst = worst.max((a - numeric).abs() / a.abs().max(1.0));
    }
    Ok(worst)
}

/// Checks every input of a tape-built scalar function against central
/// differences. `build` receives one leaf per input and must return a
/// one-element variable.
pub fn check_function<F>(inputs: &[Tensor], h: f64, build: F) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let leaves: Vec<Var<'_>> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let root = build(&tape, &leaves)?;
    let grads = tape.backward(root)?;
    let analytic: Vec<Tensor> = leaves.iter().map(|&l| grads.wrt(l)).collect();
    drop(grads);

    let mut worst: f64 = 0.0;
    for (k, theta) in inputs.iter().enumerate() {
        let err = finite_difference_check(
            |probe| {
                let tape = Tape::new();
                let leaves: Vec<Var<'_>> = inputs
                    .iter()
                    .enumerate()
                    .map(|(j, t)| tape.leaf(if j == k { probe.clone() } else { t.clone() }))
                    .collect();
                Ok(build(&tape, &leaves)?.item())
            },
            theta,
            &analytic[k],
            h,
            None,
        )?;
        worst = worst.max(err);
    }
    Ok(worst)
}
