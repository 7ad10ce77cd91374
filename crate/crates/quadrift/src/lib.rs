//! Numerical laboratory for quadratic obstructions to small-time local
//! controllability of multi-input bilinear Schrödinger equations on (0,1).
//!
//! The crate simulates the truncated equation, expands solutions to second
//! order in the control amplitude, computes the obstruction coefficient
//! series γ_p with cross-checked commutator oracles, verifies the structural
//! hypotheses behind the drift inequality, measures the drift itself on
//! control ensembles, and designs dipolar moments that realize a prescribed
//! obstruction order.  A finite-dimensional companion model with the same
//! obstruction structure is certified in exact rational arithmetic.

pub mod brackets;
pub mod config;
pub mod design;
pub mod drift;
pub mod error;
pub mod propagator;
pub mod quadrature;
pub mod signals;
pub mod spectral;
pub mod toy;

pub use config::ProblemConfig;
pub use error::{Error, Result};
