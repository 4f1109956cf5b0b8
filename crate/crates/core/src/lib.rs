//! Digital-twin assisted task offloading for vehicular edge computing.

pub mod agents;
pub mod channel;
pub mod compute;
pub mod env;
pub mod error;
pub mod harness;
pub mod nn;
pub mod predict;
pub mod scenario;

pub use error::{Error, Result};
