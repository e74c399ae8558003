//! Differentiable relaxations of Poisson sampling and tools to measure them.

pub mod error;
pub mod fidelity;
pub mod grad_metrics;
pub mod io;
pub mod method;
pub mod moments;
pub mod pvae;
pub mod regression;
pub mod relax;
pub mod sampling;

pub use error::{Error, Result};
pub use method::Method;

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
