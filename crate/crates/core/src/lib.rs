//! Simulation core for federated optimization with local training and
//! partial participation.
//!
//! The crate is `no_std` (it needs `alloc`) and holds everything that is pure
//! computation: client objectives, dataset parsing and partitioning, the
//! seeded samplers, the algorithms themselves and the closed-form rate
//! analysis. File IO, configuration and the command line live in the `fedsim`
//! crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod datasets;
pub mod engine;
mod error;
pub mod linalg;
pub mod objective;
pub mod randomness;

pub use error::{Error, Result};
