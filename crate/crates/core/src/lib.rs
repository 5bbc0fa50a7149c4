//! Coupled stochastic oscillators: one damped and diffusing, one frictionless,
//! joined by a harmonic spring. Steady states, correlators, Monte Carlo
//! ensembles and the classical-quantum mapping.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod cq;
pub mod error;
pub mod model;
pub mod poly;
pub mod sde;
pub mod spectral;
pub mod stability;
pub mod steadystate;

pub use error::{Error, Result};
pub use nalgebra;
