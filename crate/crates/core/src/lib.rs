//! Decoding lower-limb joint angles from multichannel EEG with a
//! hierarchical graph-convolutional network.
//!
//! The crate is self-contained: a small reverse-mode autodiff engine
//! ([`tensor`]), the EEG preprocessing chain ([`signal`]), electrode-graph
//! machinery ([`graph`]), the network ([`net`]), the hybrid temporal-spectral
//! loss ([`loss`]), data generation and I/O ([`data`]), training and
//! evaluation ([`train`]) and saliency analysis ([`analysis`]).

pub mod error;
pub mod analysis;
pub mod data;
pub mod exec;
pub mod experiment;
pub mod graph;
pub mod loss;
pub mod net;
pub mod signal;
pub mod tensor;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
