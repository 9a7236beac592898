//! Numerical laboratory for edge eigenvector statistics of random regular
//! graphs under a constrained Dyson Brownian motion.

pub mod constants;
pub mod ensemble;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod linalg;
pub mod metrics;
pub mod overlap;
pub mod rng;
pub mod spectral;

pub use error::{LabError, Result};
