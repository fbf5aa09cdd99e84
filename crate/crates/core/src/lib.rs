//! High-order shortcut flow matching on 2-D point clouds.
//!
//! Field networks u1 (velocity), u2 (acceleration) and u3 (jerk) are trained
//! with matching and self-consistency losses and sampled with a Taylor
//! integrator. See the README for the command-line tool.

pub mod cli;
pub mod config;
pub mod datasets;
pub mod error;
pub mod fields;
pub mod losses;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod sample;
pub mod train;
pub mod trajectory;

pub use error::{Error, Result};
