use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Mode, Tensor, Var};

impl<'t> Var<'t> {
    /// Inverted dropout: in train mode each element is zeroed with
    /// probability `p` and survivors are scaled by `1 / (1 - p)`. Eval mode
    /// (or `p = 0`) is the identity and draws nothing from `rng`.
    pub fn dropout<R: Rng + ?Sized>(self, p: f64, mode: Mode, rng: &mut R) -> Result<Var<'t>> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::param(format!("dropout probability {p} outside [0, 1)")));
        }
        if mode == Mode::Eval || p == 0.0 {
            return Ok(self);
        }
        let keep = 1.0 / (1.0 - p);
        let shape = self.shape();
        let mask = Tensor::from_fn(&shape, |_| if rng.gen::<f64>() < p { 0.0 } else { keep });
        self.mul_const(mask)
    }
}
