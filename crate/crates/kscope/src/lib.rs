//! Desk-scale MRI k-space simulation and robust-reconstruction toolkit.
//!
//! The crate simulates multi-coil Cartesian k-space from randomized
//! Shepp-Logan phantoms, undersamples it with fixed or variable acceleration
//! masks, injects per-line artifacts, and provides a corruption-detector
//! ConvNet, zero-filled / compressed-sensing / unrolled-cascade
//! reconstructors, elastic-weight-consolidation continual learning, and
//! k-space line correlation analysis. Everything is seeded and reproducible.

pub mod analysis;
pub mod cli;
pub mod corruption;
pub mod continual;
pub mod detector;
pub mod error;
pub mod kcore;
pub mod nn;
pub mod phantom;
pub mod recon;
pub mod sampling;
pub mod seeds;

pub use error::{Error, Result};
