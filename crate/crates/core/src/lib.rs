//! Dissipative dynamical-system encoding, spiking networks trained with
//! surrogate gradients, and the experiments built on them.

pub mod cli;
pub mod data;
pub mod diffcore;
pub mod dynmetrics;
pub mod dynsys;
pub mod error;
pub mod io;
pub mod exp_autoencoder;
pub mod exp_classify;
pub mod exp_rl;
pub mod linalg;
pub mod mlp;
pub mod pacbayes;
pub mod rng;
pub mod selftest;
pub mod snn;
pub mod stats;

pub use error::{Error, Result};
