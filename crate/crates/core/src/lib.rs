//! Learning effective discrete-time quantum channels from trajectory data.
//!
//! A channel is parametrized by a unitary on system ⊗ environment
//! ([`channel::StinespringModel`]) and fitted with Adam to coherence-vector
//! trajectories produced by the simulators in [`dynamics`].

pub mod channel;
pub mod error;
pub mod linalg;

pub use error::{Error, Result};
pub mod dataset;
pub mod dynamics;
pub mod eval;
pub mod trainer;
pub mod experiment;
pub mod io;
pub mod cli;
