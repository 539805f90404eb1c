//! Cooperative physical-layer security through coalition formation.
//!
//! Users of a TDMA network form coalitions that beamform each member's data
//! toward its destination while steering exact nulls at every eavesdropper.
//! Coalitions form and break through Pareto-order merge and split rules.

pub mod channel;
pub mod error;
pub mod secrecy;

pub use error::{Error, Result};
pub mod cli;
pub mod game;
pub mod partitions;
pub mod scenario;
pub mod stability;
