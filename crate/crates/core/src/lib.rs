//! Drafter-based speculative decoding for discrete autoregressive sequences,
//! with feature-similarity acceptance relaxation under a total-variation
//! budget and convergence-reweighted drafter training.

pub mod error;
pub mod model;
pub mod prob;
pub mod rng;
pub mod tree;
pub mod verify;
pub mod decode;
pub mod train;
pub mod harness;

pub use error::{Error, Result};
