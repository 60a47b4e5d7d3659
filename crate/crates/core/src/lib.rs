//! Semi-Markov Arnason-Schwarz models for multi-state
//! capture-recapture-recovery data.
//!
//! Each covariate state is expanded into an aggregate of Markov states whose
//! exit hazards reproduce an arbitrary dwell-time distribution, so the
//! ordinary forward recursion evaluates the likelihood.

// NaN has to fail the `!(x > 0.0)` style guards
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dwell;
pub mod error;
pub mod inference;
pub mod io;
pub mod likelihood;
pub mod simulate;
pub mod state_space;

pub use error::{Error, Result};
