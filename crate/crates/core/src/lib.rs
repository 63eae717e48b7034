//! Simulation and inference for Hawkes processes with signed (exciting and
//! inhibiting) piecewise-constant kernels.
// Negated float comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::excessive_precision)]

pub mod cluster;
pub mod error;
pub mod inference;
pub mod kernel;
pub mod quadrature;
pub mod queue;
pub mod renewal;
pub mod rng;
pub mod simulation;
pub mod stats;

pub use error::{Error, Result};
pub use kernel::{KernelSummary, SignedKernel};
pub use simulation::{Hawkes, PointConfiguration, SimulationPath};
