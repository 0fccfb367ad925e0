//! Disk/tape placement from usage histories.
//!
//! A boosted-tree classifier predicts which datasets go unused, its scores are
//! rank-calibrated into a popularity in `[0, 1]`, a kernel smoother forecasts
//! weekly usage, and a cost minimization picks a removal threshold and replica
//! counts. [`evaluation`] replays held-out weeks to score plans against LRU.

pub mod catalog;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod hashing;
pub mod intensity;
pub mod metrics;
pub mod pipeline;
pub mod placement;
pub mod popularity;

pub use error::{Error, Result};
