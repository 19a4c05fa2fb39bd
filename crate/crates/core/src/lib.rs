//! Per-instance privacy analysis for discrete diffusion models on categorical data.

pub mod curation;
pub mod dataset;
pub mod dp;
pub mod ddm;
pub mod error;
mod jsonf64;
pub mod lower_bound;
pub mod pdp;
pub mod schedule;
pub mod skew;
pub mod stats;

pub use error::{Error, Result};
