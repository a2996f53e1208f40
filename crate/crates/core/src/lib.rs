//! Biased random walk on the supercritical percolation cluster of the ladder graph `Z x {0,1}`:
//! environment samplers, trap geometry, the quenched walk, regeneration structure, the
//! pruned-walk coupling, Rice-method tail sums and renewal counting processes.

pub mod analytic;
pub mod coupling;
pub mod env;
pub mod error;
pub mod experiments;
pub mod traps;
pub mod regen;
pub mod renewal;
pub mod rice;
pub mod seeding;
pub mod stats;
pub mod walk;

pub use error::{Error, Result};
