//! Differentiable operations. Each op is a method on [`Var`](super::Var)
//! that records its output and a backward closure on the tape.

mod activation;
mod basic;
mod conv;
mod dft;
mod dropout;
mod linalg;
mod norm;
mod pool;

pub use dft::{dft_complex, idft_adjoint};
pub use norm::{BatchNormSettings, RunningStats};
pub use pool::PoolKind;

pub(crate) use dft::{adjoint_with, dft_with, twiddles};
pub(crate) use linalg::gemm;
