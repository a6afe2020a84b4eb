//! Gaussian-process active learning with output-weighted acquisition criteria.

pub mod acquisition;
pub mod benchmarks;
pub mod config;
pub mod density;
pub mod error;
pub mod gpr;
pub mod harness;
pub mod rng;
pub mod simplex;
pub mod verify;

pub use error::{Error, Result};
