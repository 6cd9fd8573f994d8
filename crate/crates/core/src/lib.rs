//! Hierarchical latent-command locomotion policies trained with Augmented
//! Random Search on a planar quadruped steering simulator.

pub mod ars;
pub mod cli;
pub mod error;
pub mod experiments;
pub mod hrl;
pub mod io;
pub mod linear_policy;
pub mod pmtg;
pub mod sim;

pub use error::{Error, Result};
