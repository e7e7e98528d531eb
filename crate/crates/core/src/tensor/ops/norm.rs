use crate::error::{Error, Result};
use crate::tensor::{Mode, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatchNormSettings {
    pub eps: f64,
    pub momentum: f64,
}

impl Default for BatchNormSettings {
    fn default() -> Self {
        BatchNormSettings {
            eps: 1e-5,
            momentum: 0.1,
        }
    }
}

/// Per-feature running mean and (unbiased) variance.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl RunningStats {
    pub fn new(features: usize) -> Self {
        RunningStats {
            mean: vec![0.0; features],
            var: vec![1.0; features],
        }
    }
}

impl<'t> Var<'t> {
    /// Batch normalization over feature axis 1 of a `[B, F, ...]` tensor.
    ///
    /// Train mode normalizes with the biased batch variance and folds the
    /// batch statistics into `stats` with the configured momentum; eval mode
    /// normalizes with `stats` and leaves them untouched.
    pub fn batch_norm(
        self,
        gamma: Var<'t>,
        beta: Var<'t>,
        stats: &mut RunningStats,
        mode: Mode,
        settings: BatchNormSettings,
    ) -> Result<Var<'t>> {
        let x = self.value();
        let s = x.shape().to_vec();
        if s.len() < 2 {
            return Err(Error::dim(format!("batch_norm on {s:?}")));
        }
        let (b, f) = (s[0], s[1]);
        let inner: usize = s[2..].iter().product();
        let (gv, bv) = (gamma.value(), beta.value());
        if gv.shape() != [f] || bv.shape() != [f] || stats.mean.len() != f {
            return Err(Error::dim(format!(
                "batch_norm affine/stats for {f} features: gamma {:?}, beta {:?}",
                gv.shape(),
                bv.shape()
            )));
        }
        if mode == Mode::Train && b < 2 {
            return Err(Error::DegenerateBatch(b));
        }
        let n = (b * inner) as f64;
        let block = move |bi: usize, fm: usize| ((bi * f + fm) * inner)..((bi * f + fm + 1) * inner);

        let (mean, inv_std): (Vec<f64>, Vec<f64>) = match mode {
            Mode::Train => {
                let mut mean = vec![0.0; f];
                let mut var = vec![0.0; f];
                for fm in 0..f {
                    let mu = (0..b).map(|bi| x.data()[block(bi, fm)].iter().sum::<f64>()).sum::<f64>() / n;
                    let ss: f64 = (0..b)
                        .map(|bi| x.data()[block(bi, fm)].iter().map(|v| (v - mu).powi(2)).sum::<f64>())
                        .sum();
                    mean[fm] = mu;
                    var[fm] = ss / n;
                    let unbiased = if n > 1.0 { ss / (n - 1.0) } else { 0.0 };
                    let m = settings.momentum;
                    stats.mean[fm] = (1.0 - m) * stats.mean[fm] + m * mu;
                    stats.var[fm] = (1.0 - m) * stats.var[fm] + m * unbiased;
                }
                let inv = var.iter().map(|v| 1.0 / (v + settings.eps).sqrt()).collect();
                (mean, inv)
            }
            Mode::Eval => (
                stats.mean.clone(),
                stats.var.iter().map(|v| 1.0 / (v + settings.eps).sqrt()).collect(),
            ),
        };

        let mut xhat = (*x).clone();
        let mut out = (*x).clone();
        for bi in 0..b {
            for fm in 0..f {
                let r = block(bi, fm);
                for (h, o) in xhat.data_mut()[r.clone()].iter_mut().zip(&mut out.data_mut()[r]) {
                    *h = (*h - mean[fm]) * inv_std[fm];
                    *o = gv.data()[fm] * *h + bv.data()[fm];
                }
            }
        }
        self.tape().push(
            "batch_norm",
            out,
            &[self, gamma, beta],
            Box::new(move |ctx| {
                let g = ctx.grad.data();
                let gamma = ctx.inputs[1].data();
                let mut sum_g = vec![0.0; f];
                let mut sum_gx = vec![0.0; f];
                for bi in 0..b {
                    for fm in 0..f {
                        let r = block(bi, fm);
                        for (gg, h) in g[r.clone()].iter().zip(&xhat.data()[r]) {
                            sum_g[fm] += gg;
                            sum_gx[fm] += gg * h;
                        }
                    }
                }
                let gx = ctx.needs[0].then(|| {
                    let mut d = Tensor::zeros(xhat.shape());
                    for bi in 0..b {
                        for fm in 0..f {
                            let r = block(bi, fm);
                            let scale = gamma[fm] * inv_std[fm];
                            let it = d.data_mut()[r.clone()]
                                .iter_mut()
                                .zip(&g[r.clone()])
                                .zip(&xhat.data()[r]);
                            for ((dv, gg), h) in it {
                                *dv = match mode {
                                    Mode::Train => {
                                        scale * (gg - sum_g[fm] / n - h * sum_gx[fm] / n)
                                    }
                                    Mode::Eval => scale * gg,
                                };
                            }
                        }
                    }
                    d
                });
                vec![
                    gx,
                    ctx.needs[1].then(|| Tensor::from_vec(sum_gx.clone())),
                    ctx.needs[2].then(|| Tensor::from_vec(sum_g.clone())),
                ]
            }),
        )
    }
}
