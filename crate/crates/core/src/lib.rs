//! Small-signal modelling and power system stabilizer tuning.
//!
//! The crate is organised as a pipeline:
//!
//! * [`grid`] - network and device models, power flow, and the nonlinear DAE
//!   `x' = f(x, y, u)`, `0 = g(x, y, u)` assembled from them.
//! * [`linear`] - numerical linearisation of any [`linear::DaeModel`] into a
//!   reduced state-space model.
//! * [`modal`] - eigen-decomposition, participation factors, residues and
//!   transfer-function evaluation.
//! * [`tuning`] - lead-lag design formulas, root locus, and the tuning
//!   strategies registered by name in [`tuning::MethodRegistry`].
//! * [`sim`] - implicit trapezoidal time-domain simulation, the V_ref probe,
//!   and damped-sinusoid stability classification.

pub mod dae;
pub mod error;
pub mod grid;
pub mod linear;
pub mod modal;
pub mod numeric;
pub mod sim;
pub mod tuning;

pub use dae::{DaeModel, Equilibrium};
pub use error::{Error, Result};
