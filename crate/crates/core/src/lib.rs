//! Rule extraction from compact feedforward networks.
//!
//! The pipeline trains a three-layer network constructively (adding hidden
//! nodes until a validation target is met, freezing nodes whose output has
//! settled), prunes it under a weight-decay penalty, discretizes hidden
//! activations with a one-pass threshold clusterer and finally derives
//! order-insensitive classification rules in three phases: output rules over
//! cluster values, hidden rules over inputs, and their merge.

pub mod clustering;
pub mod data;
pub mod error;
pub mod network;
pub mod pipeline;
pub mod pruning;
pub mod rulegen;
pub mod training;

pub use error::{Error, Result, Stage};
