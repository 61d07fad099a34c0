//! Simulation and verification of geometrical SDEs with jumps on matrix Lie
//! groups under random gauge transformations.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod characteristics;
pub mod drivers;
pub mod error;
pub mod gauge;
pub mod io;
pub mod lab;
pub mod geo_sde;
pub mod lie;
pub mod par;
pub mod path;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
