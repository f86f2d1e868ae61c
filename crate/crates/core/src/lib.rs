//! Numerical laboratory for entropic optimal transport: grid measures,
//! ground costs, Sinkhorn and exact solvers, plan functionals, duality-gap
//! geometry and rate verdicts over ε-sweeps.

// `!(x > 0.0)` is used on purpose to reject NaN alongside non-positive values;
// index loops mirror the formulas over several parallel arrays.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod costs;
pub mod error;
pub mod geometry;
pub mod measures;
pub mod quantities;
pub mod rates;
pub mod solvers;
pub mod tolerances;

pub use error::{LabError, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
