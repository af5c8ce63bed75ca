//! Context-aware motion planning for automated merging at occluded yield
//! junctions.
//!
//! The crate combines behavior selection and longitudinal trajectory planning
//! in one sampling loop: situation contexts supply constraints and timed
//! behavior options, every option is turned into a piecewise minimum-jerk
//! candidate, candidates are scored by comfort and by a hybrid
//! set-based/probabilistic residual risk, and the cheapest admissible
//! candidate is tracked laterally with a receding-horizon controller over a
//! kinematic bicycle model.
//!
//! A deterministic junction simulator ([`world`], [`sim`]) closes the loop and
//! [`eval`] provides the lane-keeping, timing and jerk metrics.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]
#![warn(missing_debug_implementations, rust_2018_idioms)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod context;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod planner;
pub mod preset;
pub mod risk;
pub mod sim;
pub mod special;
pub mod tracking;
pub mod world;

pub use error::{Error, Result};
