//! Context-aware branch planning for object detectors.
//!
//! Groups object categories into spatial contexts from image-level
//! co-occurrence, sizes a compressed detection head for each context, and
//! simulates a branch-routing runtime to estimate accuracy, latency and
//! energy trade-offs. No network is trained or executed.

pub mod artifacts;
pub mod branch_design;
pub mod clustering;
pub mod cooccurrence;
pub mod error;
pub mod ingest;
pub mod layout;
pub mod manifest;
pub mod pareto;
pub mod pipeline;
pub mod runtime_sim;
pub mod synth;

pub use error::{Error, Result};
