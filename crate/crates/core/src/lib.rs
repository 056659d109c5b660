//! Resilient consensus among legitimate agents that learn, from stochastic
//! trust observations, which neighbors to listen to.

pub mod attack;
pub mod bounds;
pub mod consensus;
pub mod detect;
pub mod error;
pub mod harness;
pub mod rng;
pub mod topology;
pub mod trust;

pub use error::{Error, Result};
