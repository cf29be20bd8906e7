//! Timing-based random bit generation from Poissonian detection pulses.
//!
//! The crate is organised the way data flows through a timing generator:
//!
//! - [`event_source`] simulates (or ingests) detected-pulse timestamps and
//!   models detector effects: non-paralyzable dead time and afterpulsing.
//! - [`extractor`] turns pairs of consecutive intervals into bits, either by
//!   exact comparison or by counting clock edges with a free-running
//!   (continuous) or restartable clock.
//! - [`analysis`] computes bias, serial autocorrelation and an ENT-style
//!   battery from mergeable accumulators, and evaluates the closed-form and
//!   asymptotic laws of the extraction methods.
//! - [`experiments`] runs seeded sweeps and validations end to end.
//! - [`cli`] is the `timerng` command-line front end.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
mod error;
pub mod event_source;
pub mod experiments;
pub mod extractor;
pub mod rng;

pub use error::{Error, Result};

/// Version string recorded in manifests and reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Every JSON document written by the crate carries this schema version.
pub const SCHEMA_VERSION: u32 = 1;
