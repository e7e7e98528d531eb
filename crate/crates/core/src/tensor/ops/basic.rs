use crate::error::{Error, Result};
use crate::tensor::{Tensor, Var};

fn same_shape(op: &str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::dim(format!("{op}: {:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

impl<'t> Var<'t> {
    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        same_shape("add", &a, &b)?;
        let out = a.zip_map(&b, |x, y| x + y);
        self.tape().push(
            "add",
            out,
            &[self, other],
            Box::new(|ctx| vec![Some(ctx.grad.clone()), Some(ctx.grad.clone())]),
        )
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        same_shape("sub", &a, &b)?;
        let out = a.zip_map(&b, |x, y| x - y);
        self.tape().push(
            "sub",
            out,
            &[self, other],
            Box::new(|ctx| vec![Some(ctx.grad.clone()), Some(ctx.grad.map(|g| -g))]),
        )
    }

    /// Element-wise product.
    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        same_shape("mul", &a, &b)?;
        let out = a.zip_map(&b, |x, y| x * y);
        self.tape().push(
            "mul",
            out,
            &[self, other],
            Box::new(|ctx| {
                let (a, b) = (&ctx.inputs[0], &ctx.inputs[1]);
                vec![
                    ctx.needs[0].then(|| ctx.grad.zip_map(b, |g, y| g * y)),
                    ctx.needs[1].then(|| ctx.grad.zip_map(a, |g, x| g * x)),
                ]
            }),
        )
    }

    pub fn scale(self, s: f64) -> Result<Var<'t>> {
        let out = self.value().map(|x| x * s);
        self.tape().push(
            "scale",
            out,
            &[self],
            Box::new(move |ctx| vec![Some(ctx.grad.map(|g| g * s))]),
        )
    }

    /// Element-wise product with a constant (e.g. a dropout mask).
    pub fn mul_const(self, c: Tensor) -> Result<Var<'t>> {
        let a = self.value();
        same_shape("mul_const", &a, &c)?;
        let out = a.zip_map(&c, |x, y| x * y);
        self.tape().push(
            "mul_const",
            out,
            &[self],
            Box::new(move |ctx| vec![Some(ctx.grad.zip_map(&c, |g, y| g * y))]),
        )
    }

    pub fn square(self) -> Result<Var<'t>> {
        let out = self.value().map(|x| x * x);
        self.tape().push(
            "square",
            out,
            &[self],
            Box::new(|ctx| vec![Some(ctx.grad.zip_map(&ctx.inputs[0], |g, x| 2.0 * g * x))]),
        )
    }

    /// Sum of all elements, as a one-element tensor.
    pub fn sum(self) -> Result<Var<'t>> {
        let out = Tensor::scalar(self.value().sum());
        self.tape().push(
            "sum",
            out,
            &[self],
            Box::new(|ctx| {
                let g = ctx.grad.item();
                vec![Some(Tensor::full(ctx.inputs[0].shape(), g))]
            }),
        )
    }

    pub fn mean(self) -> Result<Var<'t>> {
        let n = self.value().len() as f64;
        self.sum()?.scale(1.0 / n)
    }

    /// `Σ self ⊙ weights`, a scalar projection used to reduce tensor outputs.
    pub fn weighted_sum(self, weights: Tensor) -> Result<Var<'t>> {
        self.mul_const(weights)?.sum()
    }

    /// Linear combination `Σ cᵢ·xᵢ` of one-element variables.
    pub fn lincomb(terms: &[(Var<'t>, f64)]) -> Result<Var<'t>> {
        let Some((first, _)) = terms.first() else {
            return Err(Error::param("lincomb of zero terms"));
        };
        let mut total = 0.0;
        for (v, c) in terms {
            let val = v.value();
            if val.len() != 1 {
                return Err(Error::dim("lincomb expects scalars"));
            }
            total += c * val.item();
        }
        let coeffs: Vec<f64> = terms.iter().map(|(_, c)| *c).collect();
        let vars: Vec<Var<'t>> = terms.iter().map(|(v, _)| *v).collect();
        first.tape().push(
            "lincomb",
            Tensor::scalar(total),
            &vars,
            Box::new(move |ctx| {
                let g = ctx.grad.item();
                coeffs.iter().map(|c| Some(Tensor::scalar(g * c))).collect()
            }),
        )
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t>> {
        let v = self.value();
        let from = v.shape().to_vec();
        let out = (*v).clone().reshape(shape)?;
        self.tape().push(
            "reshape",
            out,
            &[self],
            Box::new(move |ctx| vec![Some(ctx.grad.clone().reshape(&from).unwrap())]),
        )
    }

    /// Axis permutation: output axis `k` is input axis `axes[k]`.
    pub fn permute(self, axes: &[usize]) -> Result<Var<'t>> {
        let out = self.value().permuted(axes)?;
        let mut inverse = vec![0; axes.len()];
        for (k, &a) in axes.iter().enumerate() {
            inverse[a] = k;
        }
        self.tape().push(
            "permute",
            out,
            &[self],
            Box::new(move |ctx| vec![Some(ctx.grad.permuted(&inverse).unwrap())]),
        )
    }

    pub fn transpose2d(self) -> Result<Var<'t>> {
        if self.value().ndim() != 2 {
            return Err(Error::dim("transpose2d needs a matrix"));
        }
        self.permute(&[1, 0])
    }

    /// Concatenates along the last axis; all leading extents must agree.
    pub fn concat_last(parts: &[Var<'t>]) -> Result<Var<'t>> {
        let Some(first) = parts.first() else {
            return Err(Error::param("concat of zero tensors"));
        };
        let values: Vec<_> = parts.iter().map(Var::value).collect();
        let lead = &values[0].shape()[..values[0].ndim() - 1];
        let mut widths = Vec::with_capacity(parts.len());
        for v in &values {
            let s = v.shape();
            if s.len() != lead.len() + 1 || &s[..s.len() - 1] != lead {
                return Err(Error::dim(format!("concat_last: {:?} vs {:?}", values[0].shape(), s)));
            }
            widths.push(*s.last().unwrap());
        }
        let total: usize = widths.iter().sum();
        let rows: usize = lead.iter().product();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (v, &w) in values.iter().zip(&widths) {
                data.extend_from_slice(&v.data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead.to_vec();
        shape.push(total);
        let out = Tensor::new(&shape, data)?;
        first.tape().push(
            "concat_last",
            out,
            parts,
            Box::new(move |ctx| {
                let g = ctx.grad.data();
                let mut grads: Vec<Vec<f64>> =
                    widths.iter().map(|w| Vec::with_capacity(rows * w)).collect();
                for r in 0..rows {
                    let mut off = r * total;
                    for (gv, &w) in grads.iter_mut().zip(&widths) {
                        gv.extend_from_slice(&g[off..off + w]);
                        off += w;
                    }
                }
                grads
                    .into_iter()
                    .zip(ctx.inputs)
                    .map(|(d, x)| Some(Tensor::new(x.shape(), d).unwrap()))
                    .collect()
            }),
        )
    }

    /// Adds `bias[f]` to every element of feature map `f` in a `[B, F, ...]`
    /// tensor.
    pub fn add_feature_bias(self, bias: Var<'t>) -> Result<Var<'t>> {
        let (x, b) = (self.value(), bias.value());
        let s = x.shape().to_vec();
        if s.len() < 2 || b.shape() != [s[1]] {
            return Err(Error::dim(format!("feature bias {:?} for {s:?}", b.shape())));
        }
        let (f, inner) = (s[1], s[2..].iter().product::<usize>());
        let mut out = (*x).clone();
        for (i, block) in out.data_mut().chunks_exact_mut(inner).enumerate() {
            let bv = b.data()[i % f];
            block.iter_mut().for_each(|v| *v += bv);
        }
        self.tape().push(
            "add_feature_bias",
            out,
            &[self, bias],
            Box::new(move |ctx| {
                let mut gb = vec![0.0; f];
                for (i, block) in ctx.grad.data().chunks_exact(inner).enumerate() {
                    gb[i % f] += block.iter().sum::<f64>();
                }
                vec![Some(ctx.grad.clone()), Some(Tensor::from_vec(gb))]
            }),
        )
    }
}
