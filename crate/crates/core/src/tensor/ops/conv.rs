use crate::error::{Error, Result};
use crate::exec;
use crate::tensor::{Tensor, Var};

/// `out[t] += w · x[t + shift]` over the range where both indices are valid.
#[inline]
fn shifted_axpy(out: &mut [f64], x: &[f64], w: f64, shift: isize) {
    let t = out.len() as isize;
    let lo = (-shift).max(0);
    let hi = (t - shift).min(t);
    if lo >= hi {
        return;
    }
    let (lo, hi) = (lo as usize, hi as usize);
    let src = &x[(lo as isize + shift) as usize..(hi as isize + shift) as usize];
    for (o, v) in out[lo..hi].iter_mut().zip(src) {
        *o += w * v;
    }
}

#[inline]
fn shifted_dot(g: &[f64], x: &[f64], shift: isize) -> f64 {
    let t = g.len() as isize;
    let lo = (-shift).max(0);
    let hi = (t - shift).min(t);
    if lo >= hi {
        return 0.0;
    }
    let (lo, hi) = (lo as usize, hi as usize);
    let src = &x[(lo as isize + shift) as usize..(hi as isize + shift) as usize];
    g[lo..hi].iter().zip(src).map(|(a, b)| a * b).sum()
}

impl<'t> Var<'t> {
    /// Temporal convolution with "same" zero padding.
    ///
    /// `x: [B, F_in, C, T]`, `kernels: [F_out, F_in, 1, k]` → `[B, F_out, C, T]`.
    /// Each channel row is filtered independently; the left pad is
    /// `(k - 1) / 2` and the right pad the remainder, so even kernel widths
    /// lean one tap into the future. Kernels wider than `T` are allowed; the
    /// padding simply covers the whole row.
    pub fn conv_time_same(self, kernels: Var<'t>) -> Result<Var<'t>> {
        let (x, w) = (self.value(), kernels.value());
        let (xs, ws) = (x.data(), w.data());
        let (sx, sw) = (x.shape().to_vec(), w.shape().to_vec());
        if sx.len() != 4 || sw.len() != 4 || sw[1] != sx[1] || sw[2] != 1 {
            return Err(Error::dim(format!("conv_time_same: x {sx:?}, kernels {sw:?}")));
        }
        let (b, fi, c, t) = (sx[0], sx[1], sx[2], sx[3]);
        let (fo, k) = (sw[0], sw[3]);
        let left = ((k - 1) / 2) as isize;
        let in_stride = fi * c * t;
        let out_stride = fo * c * t;

        let mut out = vec![0.0; b * out_stride];
        exec::for_each_chunk(&mut out, out_stride, |bi, ob| {
            let xb = &xs[bi * in_stride..(bi + 1) * in_stride];
            for o in 0..fo {
                for i in 0..fi {
                    for j in 0..k {
                        let wv = ws[(o * fi + i) * k + j];
                        if wv == 0.0 {
                            continue;
                        }
                        let shift = j as isize - left;
                        for ch in 0..c {
                            let dst = &mut ob[(o * c + ch) * t..(o * c + ch + 1) * t];
                            let src = &xb[(i * c + ch) * t..(i * c + ch + 1) * t];
                            shifted_axpy(dst, src, wv, shift);
                        }
                    }
                }
            }
        });
        let out = Tensor::new(&[b, fo, c, t], out)?;
        self.tape().push(
            "conv_time_same",
            out,
            &[self, kernels],
            Box::new(move |ctx| {
                let (x, w, g) = (&ctx.inputs[0], &ctx.inputs[1], ctx.grad.data());
                let (xs, ws) = (x.data(), w.data());
                let gx = ctx.needs[0].then(|| {
                    let mut d = vec![0.0; b * in_stride];
                    exec::for_each_chunk(&mut d, in_stride, |bi, db| {
                        let gb = &g[bi * out_stride..(bi + 1) * out_stride];
                        for o in 0..fo {
                            for i in 0..fi {
                                for j in 0..k {
                                    let wv = ws[(o * fi + i) * k + j];
                                    let shift = j as isize - left;
                                    for ch in 0..c {
                                        let dst = &mut db[(i * c + ch) * t..(i * c + ch + 1) * t];
                                        let src = &gb[(o * c + ch) * t..(o * c + ch + 1) * t];
                                        shifted_axpy(dst, src, wv, -shift);
                                    }
                                }
                            }
                        }
                    });
                    Tensor::new(x.shape(), d).unwrap()
                });
                let gw = ctx.needs[1].then(|| {
                    let parts = exec::map_indexed(b, |bi| {
                        let xb = &xs[bi * in_stride..(bi + 1) * in_stride];
                        let gb = &g[bi * out_stride..(bi + 1) * out_stride];
                        let mut dw = vec![0.0; fo * fi * k];
                        for o in 0..fo {
                            for i in 0..fi {
                                for j in 0..k {
                                    let shift = j as isize - left;
                                    let mut acc = 0.0;
                                    for ch in 0..c {
                                        acc += shifted_dot(
                                            &gb[(o * c + ch) * t..(o * c + ch + 1) * t],
                                            &xb[(i * c + ch) * t..(i * c + ch + 1) * t],
                                            shift,
                                        );
                                    }
                                    dw[(o * fi + i) * k + j] = acc;
                                }
                            }
                        }
                        dw
                    });
                    Tensor::new(w.shape(), exec::sum_ordered(parts, fo * fi * k)).unwrap()
                });
                vec![gx, gw]
            }),
        )
    }

    /// Depth-wise spatial convolution: one `(C, 1)` kernel per feature map.
    ///
    /// `x: [B, F, C, T]`, `kernels: [F, 1, C, 1]` → `[B, F, 1, T]`.
    pub fn depthwise_spatial(self, kernels: Var<'t>) -> Result<Var<'t>> {
        let (x, w) = (self.value(), kernels.value());
        let (xs, ws) = (x.data(), w.data());
        let (sx, sw) = (x.shape().to_vec(), w.shape().to_vec());
        if sx.len() != 4 || sw != [sx[1], 1, sx[2], 1] {
            return Err(Error::dim(format!("depthwise_spatial: x {sx:?}, kernels {sw:?}")));
        }
        let (b, f, c, t) = (sx[0], sx[1], sx[2], sx[3]);
        let mut out = vec![0.0; b * f * t];
        exec::for_each_chunk(&mut out, f * t, |bi, ob| {
            for fm in 0..f {
                let dst = &mut ob[fm * t..(fm + 1) * t];
                for ch in 0..c {
                    let wv = ws[fm * c + ch];
                    let off = ((bi * f + fm) * c + ch) * t;
                    shifted_axpy(dst, &xs[off..off + t], wv, 0);
                }
            }
        });
        let out = Tensor::new(&[b, f, 1, t], out)?;
        self.tape().push(
            "depthwise_spatial",
            out,
            &[self, kernels],
            Box::new(move |ctx| {
                let (x, w, g) = (&ctx.inputs[0], &ctx.inputs[1], ctx.grad.data());
                let (xs, ws) = (x.data(), w.data());
                let gx = ctx.needs[0].then(|| {
                    let mut d = vec![0.0; b * f * c * t];
                    exec::for_each_chunk(&mut d, f * c * t, |bi, db| {
                        for fm in 0..f {
                            let gr = &g[(bi * f + fm) * t..(bi * f + fm + 1) * t];
                            for ch in 0..c {
                                let wv = ws[fm * c + ch];
                                let dst = &mut db[(fm * c + ch) * t..(fm * c + ch + 1) * t];
                                shifted_axpy(dst, gr, wv, 0);
                            }
                        }
                    });
                    Tensor::new(x.shape(), d).unwrap()
                });
                let gw = ctx.needs[1].then(|| {
                    let parts = exec::map_indexed(b, |bi| {
                        let mut dw = vec![0.0; f * c];
                        for fm in 0..f {
                            let gr = &g[(bi * f + fm) * t..(bi * f + fm + 1) * t];
                            for ch in 0..c {
                                let off = ((bi * f + fm) * c + ch) * t;
                                dw[fm * c + ch] = shifted_dot(gr, &xs[off..off + t], 0);
                            }
                        }
                        dw
                    });
                    Tensor::new(w.shape(), exec::sum_ordered(parts, f * c)).unwrap()
                });
                vec![gx, gw]
            }),
        )
    }
}

#[cfg(test)]
mod tests {
    use crate::tensor::{Tape, Tensor};

    fn naive_conv(x: &Tensor, w: &Tensor) -> Tensor {
        let (b, fi, c, t) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let (fo, k) = (w.shape()[0], w.shape()[3]);
        let left = (k - 1) / 2;
        // explicit zero-padded copy
        let padded_len = t + k - 1;
        let mut out = Tensor::zeros(&[b, fo, c, t]);
        for bi in 0..b {
            for o in 0..fo {
                for ch in 0..c {
                    for tt in 0..t {
                        let mut acc = 0.0;
                        for i in 0..fi {
                            let mut pad = vec![0.0; padded_len];
                            for s in 0..t {
                                pad[s + left] = x.at(&[bi, i, ch, s]);
                            }
                            for j in 0..k {
                                acc += w.at(&[o, i, 0, j]) * pad[tt + j];
                            }
                        }
                        out.set(&[bi, o, ch, tt], acc);
                    }
                }
            }
        }
        out
    }

    #[test]
    fn unit_kernel_is_identity() {
        let tape = Tape::new();
        let x = Tensor::from_fn(&[1, 1, 2, 5], |i| i as f64 - 3.0);
        let y = tape
            .constant(x.clone())
            .conv_time_same(tape.constant(Tensor::full(&[1, 1, 1, 1], 1.0)))
            .unwrap();
        assert_eq!(*y.value(), x);
    }

    #[test]
    fn centered_delta_is_identity() {
        let tape = Tape::new();
        let x = Tensor::from_fn(&[2, 1, 3, 6], |i| (i as f64).sqrt());
        let w = Tensor::new(&[1, 1, 1, 3], vec![0.0, 1.0, 0.0]).unwrap();
        let y = tape.constant(x.clone()).conv_time_same(tape.constant(w)).unwrap();
        assert_eq!(*y.value(), x);
    }

    #[test]
    fn matches_naive_sliding_dot_product() {
        let tape = Tape::new();
        for &(k, t) in &[(10usize, 12usize), (3, 7), (4, 4), (10, 3)] {
            let x = Tensor::from_fn(&[2, 3, 2, t], |i| ((i * 7919) % 97) as f64 / 50.0 - 1.0);
            let w = Tensor::from_fn(&[4, 3, 1, k], |i| ((i * 104729) % 89) as f64 / 44.0 - 1.0);
            let y = tape.constant(x.clone()).conv_time_same(tape.constant(w.clone())).unwrap();
            assert!(y.value().max_abs_diff(&naive_conv(&x, &w)) < 1e-12, "k={k} t={t}");
        }
    }

    #[test]
    fn depthwise_average_and_selector() {
        let tape = Tape::new();
        let x = Tensor::from_fn(&[2, 2, 4, 3], |i| (i as f64 * 1.3).cos());
        let avg = tape
            .constant(x.clone())
            .depthwise_spatial(tape.constant(Tensor::full(&[2, 1, 4, 1], 0.25)))
            .unwrap();
        let sel = Tensor::from_fn(&[2, 1, 4, 1], |i| if i % 4 == 3 { 1.0 } else { 0.0 });
        let picked = tape.constant(x.clone()).depthwise_spatial(tape.constant(sel)).unwrap();
        for b in 0..2 {
            for f in 0..2 {
                for t in 0..3 {
                    let mean = (0..4).map(|c| x.at(&[b, f, c, t])).sum::<f64>() / 4.0;
                    assert!((avg.value().at(&[b, f, 0, t]) - mean).abs() < 1e-15);
                    assert_eq!(picked.value().at(&[b, f, 0, t]), x.at(&[b, f, 3, t]));
                }
            }
        }
    }

    #[test]
    fn depthwise_rejects_wrong_channel_extent() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[1, 2, 4, 3]));
        let w = tape.constant(Tensor::zeros(&[2, 1, 3, 1]));
        assert!(matches!(x.depthwise_spatial(w), Err(crate::Error::Dimension(_))));
    }
}
