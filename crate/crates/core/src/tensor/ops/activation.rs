use crate::error::Result;
use crate::tensor::{Tensor, Var};

impl<'t> Var<'t> {
    pub fn relu(self) -> Result<Var<'t>> {
        let out = self.value().map(|x| x.max(0.0));
        self.tape().push(
            "relu",
            out,
            &[self],
            Box::new(|ctx| {
                vec![Some(ctx.grad.zip_map(&ctx.inputs[0], |g, x| if x > 0.0 { g } else { 0.0 }))]
            }),
        )
    }

    /// ELU with α = 1.
    pub fn elu(self) -> Result<Var<'t>> {
        let out = self.value().map(elu);
        self.tape().push(
            "elu",
            out,
            &[self],
            Box::new(|ctx| {
                vec![Some(ctx.grad.zip_map(&ctx.inputs[0], |g, x| {
                    if x > 0.0 {
                        g
                    } else {
                        g * x.exp()
                    }
                }))]
            }),
        )
    }

    /// Softmax over the last axis (max-subtracted).
    pub fn softmax_last(self) -> Result<Var<'t>> {
        let x = self.value();
        let n = *x.shape().last().unwrap();
        let mut out = (*x).clone();
        for row in out.data_mut().chunks_exact_mut(n) {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                z += *v;
            }
            row.iter_mut().for_each(|v| *v /= z);
        }
        self.tape().push(
            "softmax",
            out,
            &[self],
            Box::new(move |ctx| {
                let mut d = Tensor::zeros(ctx.out.shape());
                let rows = d
                    .data_mut()
                    .chunks_exact_mut(n)
                    .zip(ctx.out.data().chunks_exact(n))
                    .zip(ctx.grad.data().chunks_exact(n));
                for ((dr, yr), gr) in rows {
                    let dot: f64 = yr.iter().zip(gr).map(|(y, g)| y * g).sum();
                    for ((d, y), g) in dr.iter_mut().zip(yr).zip(gr) {
                        *d = y * (g - dot);
                    }
                }
                vec![Some(d)]
            }),
        )
    }
}

fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}
