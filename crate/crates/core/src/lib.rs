//! Truthful, budget-feasible and adaptive participant recruitment for
//! community sensing under privacy-obfuscated user profiles.
//!
//! The crate is `no_std` (it needs `alloc`) and contains only pure
//! computation:
//!
//! * [`domain`]: locations, sensing/privacy profiles, observations,
//!   realizations and the coverage utility with its expected marginal gain.
//! * [`population`]: seeded synthetic populations and obfuscation models.
//! * [`mechanisms`]: the greedy allocation policies (adaptive, non-adaptive,
//!   privacy-off; truthful and untruthful) plus a random baseline.
//! * [`payments`]: per-realization threshold payments, their expectation
//!   (exact or Hoeffding-sampled) and the empirical budget reduction factor.
//! * [`oracle`]: brute-force ground truth for desk-sized instances.
//!
//! File formats, the experiment harness and the CLI live in the companion
//! `crowdsense` crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod domain;
pub mod error;
pub mod mechanisms;
pub mod oracle;
pub mod payments;
pub mod population;
pub mod rng;

pub use error::{Error, Result};

/// Absolute tolerance used for utility comparisons.
pub const UTILITY_TOLERANCE: f64 = 1e-9;
