#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod field;
pub mod heat;
pub mod prm_noise;
pub mod rng;
pub mod snapshot;
pub mod spde;
pub mod stable_core;
pub mod stats;
pub mod walsh;

pub use error::{Error, Result};
