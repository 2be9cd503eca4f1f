//! Sectional solver for the coagulation equation with multiple fragmentation,
//! singular coagulation rates and weak fragmentation, together with the
//! analytic gelation bounds and a-priori moment estimates it is checked against.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod grid_state;
pub mod integrator;
pub mod kernels;
pub mod scheme;

pub use error::{Error, Result};
