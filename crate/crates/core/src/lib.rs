//! Lattice-coded cooperative relaying: coding, decoding, relay protocols
//! and their analysis.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod channels;
pub mod cma;
pub mod ddf;
pub mod decoder;
pub mod error;
pub mod framing;
pub mod harness;
pub mod lattice;
pub mod mathkit;
pub mod naf;
pub mod record;
pub mod spacetime;

pub use error::{Error, Result};
