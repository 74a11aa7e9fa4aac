//! Axisymmetric incompressible Navier-Stokes solver in the swirl/vorticity
//! formulation, with a diagnostics harness for a priori regularity bounds.
//!
//! The prognostic pair is (gamma, omega) = (r v_theta, omega_theta / r); the
//! meridional velocity closes through the angular stream function. Unit
//! viscosity throughout. Monitors evaluate both sides of the tracked
//! inequalities and report implied constants.

pub mod cli;
pub mod diagnostics;
pub mod elliptic;
pub mod error;
pub mod evolution;
pub mod field;
pub mod geometry;
pub mod snapshot;

pub use error::{Error, Result};
pub use field::{FlowState, ScalarField};
pub use geometry::{Grid, Measure, Region, RegionKind};
