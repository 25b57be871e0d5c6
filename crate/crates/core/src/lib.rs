//! Numerical engine for partial tubes, warped and quasi-warped products.

// `!(x > 0.0)` rejects NaN on purpose; index loops mirror the formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod ambient;
pub mod error;
pub mod decomp;
pub mod exprlang;
pub mod immersion;
pub mod normconn;
pub mod tube;

pub use error::{Error, Result};
