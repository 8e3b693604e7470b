//! Compressed coding workbench: AMP/GAMP decoding of FEC-coded, compressed
//! signals, state evolution and area-theorem rate analysis, and analog
//! spatial coupling.

// `!(x > 0.0)` style guards are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asc;
pub mod bench;
pub mod denoise;
pub mod error;
pub mod evolve;
pub mod model;
pub mod numeric;
pub mod recon;
pub mod seed;
pub mod sensing;

pub use error::{Error, Result};
