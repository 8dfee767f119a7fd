//! Multi-treatment representation balancing with bound-optimized selection
//! of the balancing weight.

pub mod balancing;
pub mod boab;
pub mod datagen;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod kernels;
pub mod math;
pub mod model;
pub mod model_file;
pub mod parallel;
pub mod train;

pub use error::{Error, Result};
