//! Simulation and recovery algorithms for a multi-user quantum access network
//! whose timing is carried by the qubit stream itself.

mod error;
mod prf;

pub mod capacity;
pub mod channel;
pub mod keyrate;
pub mod pipeline;
pub mod protocol;
pub mod sync;

pub use error::{Error, Result};
