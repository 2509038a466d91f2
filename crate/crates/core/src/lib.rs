//! Performance databases from Monte Carlo bit-error simulations, and mining
//! of optimized connected rectilinear regions over the configuration space.
//!
//! The pipeline has three levels of aggregation:
//!
//! - **points**: per-configuration BER samples collected by the adaptive
//!   [`sampler`] until one of the stopping rules in [`stats`] fires;
//! - **buckets**: prior-weighted mixtures of points ([`bucketing`]) whose
//!   confidence of acceptable average performance is discretized into hits;
//! - **regions**: admissible (connected rectilinear) bucket sets with
//!   optimized gain, support or confidence ([`miner`]).
//!
//! [`simgen`] provides the two-branch diversity simulator and its closed-form
//! oracle, [`analysis`] the surface fit, slices, ECDFs and cross-validation,
//! and [`cli`] the command-line front end and file formats.

pub mod analysis;
pub mod bucketing;
pub mod cli;
mod error;
pub mod grid;
pub mod miner;
pub mod sampler;
pub mod simgen;
pub mod stats;

pub use error::{Error, Result};
