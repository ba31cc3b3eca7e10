//! Random walks on free groups, free products and the lamplighter group:
//! Green kernels, boundary geometry and limit theorems.

pub mod ball;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod green;
pub mod group;
pub mod lab;
pub mod stats;
pub mod tree;
pub mod walk;

pub use error::{Error, Result};
pub use group::{FreeWord, GroupElement, GroupSpec, LampState, Letter, Metric, WordMetric};
