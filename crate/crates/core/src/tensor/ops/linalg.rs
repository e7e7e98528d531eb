use crate::error::{Error, Result};
use crate::exec;
use crate::tensor::{Tensor, Var};

/// `c = a·b + beta·c` on strided row/column layouts.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    let last = |rows: usize, cols: usize, rs: usize, cs: usize| (rows - 1) * rs + (cols - 1) * cs;
    if k > 0 {
        assert!(last(m, k, rsa, csa) < a.len(), "gemm: a out of bounds");
        assert!(last(k, n, rsb, csb) < b.len(), "gemm: b out of bounds");
    }
    assert!(last(m, n, rsc, csc) < c.len(), "gemm: c out of bounds");
    // SAFETY: every index touched by dgemm lies within the slices (checked above)
    // and `c` does not alias `a` or `b` because it is borrowed mutably.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

impl<'t> Var<'t> {
    /// Matrix product of `[m, k]` and `[k, n]`.
    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        let (sa, sb) = (a.shape(), b.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::dim(format!("matmul {sa:?} x {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, a.data(), (k, 1), b.data(), (n, 1), 0.0, &mut out, (n, 1));
        let out = Tensor::new(&[m, n], out)?;
        self.tape().push(
            "matmul",
            out,
            &[self, other],
            Box::new(move |ctx| {
                let (a, b, g) = (&ctx.inputs[0], &ctx.inputs[1], ctx.grad.data());
                let ga = ctx.needs[0].then(|| {
                    let mut d = vec![0.0; m * k];
                    gemm(m, n, k, g, (n, 1), b.data(), (1, n), 0.0, &mut d, (k, 1));
                    Tensor::new(&[m, k], d).unwrap()
                });
                let gb = ctx.needs[1].then(|| {
                    let mut d = vec![0.0; k * n];
                    gemm(k, m, n, a.data(), (1, k), g, (n, 1), 0.0, &mut d, (n, 1));
                    Tensor::new(&[k, n], d).unwrap()
                });
                vec![ga, gb]
            }),
        )
    }

    /// Batched product `[B, m, k] x [B, k, n]`, or `[B, m, k] x [B, n, k]ᵀ`
    /// when `transpose_rhs` is set.
    pub fn bmm(self, other: Var<'t>, transpose_rhs: bool) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        let (ad, bd) = (a.data(), b.data());
        let (sa, sb) = (a.shape().to_vec(), b.shape().to_vec());
        let ok = sa.len() == 3
            && sb.len() == 3
            && sa[0] == sb[0]
            && if transpose_rhs { sa[2] == sb[2] } else { sa[2] == sb[1] };
        if !ok {
            return Err(Error::dim(format!(
                "bmm {sa:?} x {sb:?} (transpose_rhs={transpose_rhs})"
            )));
        }
        let (bs, m, k) = (sa[0], sa[1], sa[2]);
        let n = if transpose_rhs { sb[1] } else { sb[2] };
        // strides of the (logical) k x n right operand
        let rhs = if transpose_rhs { (1, k) } else { (n, 1) };
        let mut out = vec![0.0; bs * m * n];
        exec::for_each_chunk(&mut out, m * n, |i, c| {
            let ai = &ad[i * m * k..(i + 1) * m * k];
            let bi = &bd[i * k * n..(i + 1) * k * n];
            gemm(m, k, n, ai, (k, 1), bi, rhs, 0.0, c, (n, 1));
        });
        let out = Tensor::new(&[bs, m, n], out)?;
        self.tape().push(
            "bmm",
            out,
            &[self, other],
            Box::new(move |ctx| {
                let (a, b, g) = (&ctx.inputs[0], &ctx.inputs[1], ctx.grad.data());
                let (ad, bd) = (a.data(), b.data());
                let ga = ctx.needs[0].then(|| {
                    // dA = G · Bᵀ (logical B is k x n)
                    let rhs_t = (rhs.1, rhs.0);
                    let mut d = vec![0.0; bs * m * k];
                    exec::for_each_chunk(&mut d, m * k, |i, c| {
                        let gi = &g[i * m * n..(i + 1) * m * n];
                        let bi = &bd[i * k * n..(i + 1) * k * n];
                        gemm(m, n, k, gi, (n, 1), bi, rhs_t, 0.0, c, (k, 1));
                    });
                    Tensor::new(&[bs, m, k], d).unwrap()
                });
                let gb = ctx.needs[1].then(|| {
                    // dB_logical = Aᵀ · G, stored in B's own layout
                    let mut d = vec![0.0; bs * k * n];
                    exec::for_each_chunk(&mut d, k * n, |i, c| {
                        let ai = &ad[i * m * k..(i + 1) * m * k];
                        let gi = &g[i * m * n..(i + 1) * m * n];
                        gemm(k, m, n, ai, (1, k), gi, (n, 1), 0.0, c, rhs);
                    });
                    Tensor::new(b.shape(), d).unwrap()
                });
                vec![ga, gb]
            }),
        )
    }

    /// Affine map on the last axis: `x·W + b` with `W: [d_in, d_out]`.
    pub fn linear(self, weight: Var<'t>, bias: Var<'t>) -> Result<Var<'t>> {
        let (x, w, b) = (self.value(), weight.value(), bias.value());
        let sx = x.shape().to_vec();
        let sw = w.shape();
        let d_in = *sx.last().unwrap();
        if sw.len() != 2 || sw[0] != d_in || b.shape() != [sw[1]] {
            return Err(Error::dim(format!(
                "linear: x {sx:?}, W {sw:?}, b {:?}",
                b.shape()
            )));
        }
        let d_out = sw[1];
        let rows = x.len() / d_in;
        let mut out = Vec::with_capacity(rows * d_out);
        for _ in 0..rows {
            out.extend_from_slice(b.data());
        }
        gemm(rows, d_in, d_out, x.data(), (d_in, 1), w.data(), (d_out, 1), 1.0, &mut out, (d_out, 1));
        let mut shape = sx.clone();
        *shape.last_mut().unwrap() = d_out;
        let out = Tensor::new(&shape, out)?;
        self.tape().push(
            "linear",
            out,
            &[self, weight, bias],
            Box::new(move |ctx| {
                let (x, w, g) = (&ctx.inputs[0], &ctx.inputs[1], ctx.grad.data());
                let gx = ctx.needs[0].then(|| {
                    let mut d = vec![0.0; rows * d_in];
                    gemm(rows, d_out, d_in, g, (d_out, 1), w.data(), (1, d_out), 0.0, &mut d, (d_in, 1));
                    Tensor::new(x.shape(), d).unwrap()
                });
                let gw = ctx.needs[1].then(|| {
                    let mut d = vec![0.0; d_in * d_out];
                    gemm(d_in, rows, d_out, x.data(), (1, d_in), g, (d_out, 1), 0.0, &mut d, (d_out, 1));
                    Tensor::new(&[d_in, d_out], d).unwrap()
                });
                let gb = ctx.needs[2].then(|| {
                    let mut d = vec![0.0; d_out];
                    for row in g.chunks_exact(d_out) {
                        for (a, v) in d.iter_mut().zip(row) {
                            *a += v;
                        }
                    }
                    Tensor::from_vec(d)
                });
                vec![gx, gw, gb]
            }),
        )
    }
}

#[cfg(test)]
mod tests {
    use crate::tensor::{Tape, Tensor};

    #[test]
    fn identity_times_b() {
        let tape = Tape::new();
        let b = Tensor::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        let y = tape.constant(Tensor::eye(2)).matmul(tape.constant(b.clone())).unwrap();
        assert_eq!(*y.value(), b);
    }

    #[test]
    fn hand_product() {
        let tape = Tape::new();
        let a = tape.constant(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
        let b = tape.constant(Tensor::from_rows(&[vec![1.0], vec![1.0]]).unwrap());
        assert_eq!(a.matmul(b).unwrap().value().data(), &[3.0, 7.0]);
    }

    #[test]
    fn shape_mismatch_is_dimension_error() {
        let tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[2, 3]));
        assert!(matches!(a.matmul(b), Err(crate::Error::Dimension(_))));
    }

    #[test]
    fn linear_hand_values() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::from_vec(vec![1.0, 1.0]));
        let w = tape.constant(Tensor::from_rows(&[vec![1.0], vec![1.0]]).unwrap());
        let b = tape.constant(Tensor::from_vec(vec![1.0]));
        assert_eq!(x.linear(w, b).unwrap().value().data(), &[3.0]);

        let x = tape.constant(Tensor::from_rows(&[vec![0.5, -2.0], vec![3.0, 1.0]]).unwrap());
        let y = x
            .linear(tape.constant(Tensor::eye(2)), tape.constant(Tensor::zeros(&[2])))
            .unwrap();
        assert_eq!(*y.value(), *x.value());
    }

    #[test]
    fn bmm_transposed_matches_plain() {
        let tape = Tape::new();
        let a = Tensor::from_fn(&[2, 3, 4], |i| (i as f64 * 0.37).sin());
        let b = Tensor::from_fn(&[2, 4, 5], |i| (i as f64 * 0.11).cos());
        let bt = b.permuted(&[0, 2, 1]).unwrap();
        let y1 = tape.constant(a.clone()).bmm(tape.constant(b), false).unwrap();
        let y2 = tape.constant(a).bmm(tape.constant(bt), true).unwrap();
        assert!(y1.value().max_abs_diff(&y2.value()) < 1e-14);
    }
}
