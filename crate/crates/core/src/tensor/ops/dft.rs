use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::tensor::{Tensor, Var};

/// `(cos, sin)` of `2π·m/n` for `m in 0..n`. Indexing with `(f·t) mod n`
/// keeps every phase argument in `[0, 2π)`.
pub(crate) fn twiddles(n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|m| {
            let a = 2.0 * PI * m as f64 / n as f64;
            (a.cos(), a.sin())
        })
        .collect()
}

/// Direct DFT `X[f] = Σ_t x[t]·e^{-2πi·f·t/n}`, returned as `(re, im)` pairs.
pub fn dft_complex(x: &[f64]) -> Vec<(f64, f64)> {
    let n = x.len();
    let tw = twiddles(n);
    dft_with(x, &tw)
}

pub(crate) fn dft_with(x: &[f64], tw: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let n = x.len();
    (0..n)
        .map(|f| {
            let mut re = 0.0;
            let mut im = 0.0;
            for (t, &v) in x.iter().enumerate() {
                let (c, s) = tw[(f * t) % n];
                re += v * c;
                im -= v * s;
            }
            (re, im)
        })
        .collect()
}

/// Adjoint of [`dft_complex`] viewed as a real-linear map `x → (re, im)`:
/// given cotangents for every bin, returns the cotangent of `x`.
pub fn idft_adjoint(g: &[(f64, f64)]) -> Vec<f64> {
    let n = g.len();
    let tw = twiddles(n);
    adjoint_with(g, &tw)
}

pub(crate) fn adjoint_with(g: &[(f64, f64)], tw: &[(f64, f64)]) -> Vec<f64> {
    let n = g.len();
    (0..n)
        .map(|t| {
            g.iter()
                .enumerate()
                .map(|(f, &(gr, gi))| {
                    let (c, s) = tw[(f * t) % n];
                    gr * c - gi * s
                })
                .sum()
        })
        .collect()
}

impl<'t> Var<'t> {
    /// DFT of a 1-D signal of length `n`; output `[n, 2]` holds `(re, im)`
    /// per bin.
    pub fn dft(self) -> Result<Var<'t>> {
        let x = self.value();
        if x.ndim() != 1 {
            return Err(Error::dim(format!("dft expects a 1-D signal, got {:?}", x.shape())));
        }
        let n = x.len();
        let bins = dft_complex(x.data());
        let out = Tensor::new(&[n, 2], bins.iter().flat_map(|&(r, i)| [r, i]).collect())?;
        self.tape().push(
            "dft",
            out,
            &[self],
            Box::new(move |ctx| {
                let g: Vec<(f64, f64)> =
                    ctx.grad.data().chunks_exact(2).map(|p| (p[0], p[1])).collect();
                vec![Some(Tensor::from_vec(idft_adjoint(&g)))]
            }),
        )
    }
}
