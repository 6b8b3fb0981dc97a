//! Adversarial market-making on a Hawkes-driven execution simulator.
pub mod adversary;
pub mod checkpoint;
pub mod env;
pub mod error;
pub mod eval;
pub mod hawkes;
pub mod market;
pub mod nn;
pub mod pipeline;
pub mod rl;
pub mod selftest;

pub use error::{Error, Result};
