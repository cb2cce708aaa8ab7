//! Pseudospectral toolkit for half-wave, Klein-Gordon and Dirac evolution on a
//! periodic box, with the frequency localizations and estimate probes built on top.

pub mod angular;
pub mod dirac;
pub mod error;
pub mod grid;
pub mod multiplier;
pub mod nonlinear;
pub mod normbench;
pub mod propagator;
pub mod report;
pub mod solver;

pub use error::{Error, Result};
pub use grid::{GridSpec, ScalarField, SpacetimeField, SpinorField, C64};
pub use report::ProbeReport;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
