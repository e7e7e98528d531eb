//! The decoding network and its parameter plumbing.

mod config;
mod model;
mod params;

pub use config::ModelConfig;
pub use model::{Bound, ForwardOutput, Model, OUTPUT_WEIGHT};
pub use params::{Checkpoint, Param, ParamStore};
