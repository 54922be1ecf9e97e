//! Forward-backward-half-forward splitting for monotone inclusions
//! `0 in Ax + B1x + B2x`, its preconditioned, primal-dual and distributed
//! variants, and the baselines they are measured against.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod applications;
pub mod cli;
pub mod distributed;
pub mod error;
pub mod fbhf;
pub mod linalg;
pub mod operators;
pub mod precond;
pub mod primal_dual;

pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};
