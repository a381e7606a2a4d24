//! Numerical laboratory for rotationally symmetric Ricci flow neckpinches.

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod barrier;
pub mod error;
pub mod flow;
pub mod hermite;
pub mod mz;
pub mod numerics;
pub mod profile;
pub mod runner;
pub mod selfsimilar;

pub use error::{Error, Result};
