//! Simulation and estimation toolkit for a charged micro-diamond levitated in a
//! damped ring Paul trap.
//!
//! The crate covers the physical models and the harness that chains them:
//!
//! - [`spin_model`]: NV⁻ ground-state spin Hamiltonian and the temperature
//!   dependence of the zero-field splitting `D(T)`.
//! - [`odmr`]: synthetic ESR spectra and a damped least-squares double-dip fit.
//! - [`thermometry`]: inversion of a fitted `D` into a temperature estimate.
//! - [`trap_dynamics`]: damped Mathieu dynamics, Floquet stability, secular
//!   frequency, micromotion and iso-q schedules.
//! - [`thermal_model`]: laser absorption against free-molecular gas cooling
//!   and radiation, plus the empirical calibrations.
//! - [`protocols`]: closed-loop power/pressure sweeps, particle preselection,
//!   pump-down and stability maps, with their file formats.
//!
//! Units follow the key names: frequencies in GHz for spin physics, SI for
//! mechanics, pressure in mbar at every public boundary.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constants;
pub mod error;
pub mod odmr;
pub mod protocols;
pub mod spin_model;
pub mod thermal_model;
pub mod thermometry;
pub mod trap_dynamics;

pub use error::{Error, Result};
