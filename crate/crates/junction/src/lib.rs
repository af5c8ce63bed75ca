//! Scenario files, batch runs, reports and the acceptance suite on top of
//! [`junction_core`].

pub mod acceptance;
pub mod error;
pub mod io;
pub mod output;
pub mod report;
pub mod runner;

pub use error::{Error, Result};
