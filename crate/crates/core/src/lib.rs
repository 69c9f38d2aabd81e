//! Slot-level simulator for eMBB/URLLC multiplexing by puncturing.
//!
//! The crate covers the rate model, seeded channel and traffic generation,
//! the risk-averse block-coordinate optimizer, an actor-critic puncturing
//! scheduler, reference baselines, metrics and an experiment harness.

pub mod baselines;
pub mod config;
pub mod drra;
pub mod env;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod pgacl;

pub use config::ScenarioConfig;
pub use error::{Error, Result};
