//! Simulation engines and benchmarks for quasi-adiabatic thermal evolution
//! (QATE) of Gibbs states.

pub mod error;
pub mod exact_diag;
pub mod gaussian;
pub mod linalg;
pub mod protocol;
pub mod spectral;
pub mod tfim_blocks;

pub use error::{QateError, Result};
