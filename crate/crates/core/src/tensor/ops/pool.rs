use crate::error::{Error, Result};
use crate::tensor::{Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolKind {
    Avg,
    Max,
}

impl<'t> Var<'t> {
    /// Non-overlapping pooling over the last axis with stride = `width`.
    /// Trailing samples that do not fill a window are dropped. Max-pool ties
    /// go to the lowest index.
    pub fn pool_last(self, kind: PoolKind, width: usize) -> Result<Var<'t>> {
        if width == 0 {
            return Err(Error::param("pool width must be at least 1"));
        }
        let x = self.value();
        let shape = x.shape().to_vec();
        let t = *shape.last().unwrap();
        let t_out = t / width;
        if t_out == 0 {
            return Err(Error::dim(format!("pool width {width} exceeds length {t}")));
        }
        let rows = x.len() / t;
        let mut out = Vec::with_capacity(rows * t_out);
        let mut argmax = Vec::new();
        for row in x.data().chunks_exact(t) {
            for win in row[..t_out * width].chunks_exact(width) {
                match kind {
                    PoolKind::Avg => out.push(win.iter().sum::<f64>() / width as f64),
                    PoolKind::Max => {
                        let mut best = 0;
                        for (i, &v) in win.iter().enumerate() {
                            if v > win[best] {
                                best = i;
                            }
                        }
                        argmax.push(best);
                        out.push(win[best]);
                    }
                }
            }
        }
        let mut out_shape = shape.clone();
        *out_shape.last_mut().unwrap() = t_out;
        let out = Tensor::new(&out_shape, out)?;
        self.tape().push(
            match kind {
                PoolKind::Avg => "avg_pool",
                PoolKind::Max => "max_pool",
            },
            out,
            &[self],
            Box::new(move |ctx| {
                let mut d = Tensor::zeros(&shape);
                let g = ctx.grad.data();
                for (r, row) in d.data_mut().chunks_exact_mut(t).enumerate() {
                    for w in 0..t_out {
                        let gv = g[r * t_out + w];
                        match kind {
                            PoolKind::Avg => row[w * width..(w + 1) * width]
                                .iter_mut()
                                .for_each(|v| *v = gv / width as f64),
                            PoolKind::Max => row[w * width + argmax[r * t_out + w]] = gv,
                        }
                    }
                }
                vec![Some(d)]
            }),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::PoolKind;
    use crate::tensor::{Tape, Tensor};

    #[test]
    fn avg_on_constant_blocks() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::from_vec(vec![3.0, 3.0, 3.0, 9.0, 9.0, 9.0]));
        assert_eq!(x.pool_last(PoolKind::Avg, 3).unwrap().value().data(), &[3.0, 9.0]);
    }

    #[test]
    fn max_hand_pick_and_tie_routing() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(vec![1.0, 5.0, 2.0, 0.0, 7.0, 7.0]));
        let y = x.pool_last(PoolKind::Max, 3).unwrap();
        assert_eq!(y.value().data(), &[5.0, 7.0]);
        let g = tape.backward(y.sum().unwrap()).unwrap();
        assert_eq!(g.wrt(x).data(), &[0.0, 1.0, 0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn avg_gradient_is_one_third() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]));
        let y = x.pool_last(PoolKind::Avg, 3).unwrap();
        assert_eq!(y.shape(), vec![2]);
        let g = tape.backward(y.sum().unwrap()).unwrap();
        let third = 1.0 / 3.0;
        assert_eq!(g.wrt(x).data(), &[third, third, third, third, third, third, 0.0]);
    }

    #[test]
    fn zero_width_rejected() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::from_vec(vec![1.0]));
        assert!(matches!(x.pool_last(PoolKind::Avg, 0), Err(crate::Error::Parameter(_))));
    }
}
