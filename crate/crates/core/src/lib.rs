//! Differentially private release of Gaussian mixture models: fitting,
//! adjacency analysis, noise calibration, randomized release and audits.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod adjacency;
pub mod audit;
pub mod divergence;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod mechanisms;
pub mod model;
pub mod planner;
pub mod rng;
pub mod sdp;

pub use error::{Error, Result};
