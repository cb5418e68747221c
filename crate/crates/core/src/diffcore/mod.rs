//! Dense reverse-mode automatic differentiation.
//!
//! A [`Graph`] is a tape: every operation appends a node, so node order is a
//! topological order and the backward pass is a single reverse sweep.
//! Parameters live in a [`ParamStore`] and enter a graph as leaves.

mod gradcheck;
mod graph;
mod optim;
mod params;
mod tensor;

pub use gradcheck::{grad_check, GradCheckReport, ParamCheck};
pub use graph::{surrogate_grad, Graph, Grads, SpikeMode, Var, SURROGATE_SLOPE};
pub use optim::{clip_global_norm, global_norm, Adam, Sgd};
pub use params::{Checkpoint, ParamId, ParamRecord, ParamStore};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffError {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("non-finite gradient for parameter {0}")]
    NonFiniteGrad(String),
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("tensor rank {0} exceeds the supported maximum of 3")]
    Rank(usize),
}

pub type DResult<T> = std::result::Result<T, DiffError>;
