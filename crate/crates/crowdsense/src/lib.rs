//! File formats, experiment harness, verification battery and CLI commands
//! on top of `crowdsense-core`.
//!
//! * [`io`]: region CSV and JSON config files.
//! * [`spec`]: experiment specifications.
//! * [`harness`]: paired-trial comparisons, budget-required search, outputs.
//! * [`verify`]: the property battery against the brute-force oracle.
//! * [`commands`]: one function per CLI subcommand.
//! * [`fixtures`]: a synthetic state-sized region.

pub mod commands;
pub mod error;
pub mod fixtures;
pub mod harness;
pub mod io;
pub mod spec;
pub mod verify;

pub use error::{HarnessError, Result};
