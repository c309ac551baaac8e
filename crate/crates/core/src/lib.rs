//! Communication-efficient distributed optimization of generalized linear
//! models with lattice-quantized preconditioners and Newton directions.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod baselines;
pub mod error;
pub mod glm_model;
pub mod harness;
pub mod min_estimator;
pub mod net_sim;
mod protocol;
pub mod q_newton;
pub mod qpgd;
pub mod quantizer;
pub mod sym_codec;
pub mod trace;

pub use error::{Error, Result};
