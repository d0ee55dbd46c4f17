//! Simulation and fitting of photo-induced spin polarization in a
//! triplet–doublet spin pair, plus sequential-kinetics global analysis of
//! transient-absorption data.

// Negated comparisons deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fitting;
pub mod io;
pub mod kinetics;
pub mod polarization;
pub mod scalar;
pub mod spectrum;
pub mod spin;
pub mod units;

pub use error::{Error, Result};
pub use scalar::Real;

pub type SpinSystem = spin::SpinSystemSpec<f64>;
pub type Orientation = spin::LabOrientation<f64>;
