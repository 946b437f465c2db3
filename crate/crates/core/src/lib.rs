//! Sequential designs of computer experiments for Bayesian calibration.

pub mod bench;
pub mod config;
pub mod error;
pub mod field;
pub mod gp;
pub mod mcmc;
pub mod metrics;
pub mod seed;
pub mod seq_design;
pub mod space;
pub mod tool;

pub use error::{Error, Result};
