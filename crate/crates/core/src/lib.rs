//! Power-system state estimation, residual-based bad-data detection, and
//! stealthy false-data-injection attack analysis.
//!
//! The DC pipeline is `parse_case -> dc_jacobian -> estimate_dc -> detectors`;
//! [`attack`] builds perturbations `a = H c` that pass every detector.

pub mod attack;
pub mod bad_data;
pub mod error;
pub mod estimator;
pub mod grid;
pub mod harness;
mod linalg;
pub mod measurement;

pub use error::{Error, Result};
pub use linalg::{null_space, numerical_rank, RANK_TOL};
