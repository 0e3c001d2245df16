//! Numerical laboratory for boundary Hardy inequalities with iterated-logarithm
//! weights, for BV and fractional Sobolev functions.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod extremal;
pub mod functions;
pub mod geometry;
pub mod hardy;
pub mod logweights;
pub mod quad;
pub mod seminorms;

pub use error::{Error, Result};
