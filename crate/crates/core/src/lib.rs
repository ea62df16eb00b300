//! Exact simulation of the totally asymmetric simple exclusion process from
//! the step initial condition, its observables, and the exact and Monte Carlo
//! machinery used to check the limit laws of total jumps and active
//! particles.

pub mod cli;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod io;
pub mod observables;
pub mod oracle;
pub mod profile;
pub mod reference;
pub mod rng;
pub mod stats;
pub mod suites;

pub use dynamics::{ClockReference, JumpEvent, SimState};
pub use error::{Error, Result};
pub use profile::JumpProfile;
pub use rng::RngStreamSpec;
