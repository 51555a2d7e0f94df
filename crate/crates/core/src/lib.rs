//! Societal-boom delay-differential model: simulation, equilibrium stability,
//! Metropolis-Hastings calibration and the analyst-driven estimation loop.

pub mod dde;
pub mod error;
pub mod goodness;
pub mod inference;
pub mod io;
pub mod model;
pub mod pes;
pub mod report;
pub mod stability;

pub use error::{Error, Result};
pub use model::{BoomParams, StateVec};
