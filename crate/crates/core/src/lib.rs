//! Oil classification from a simulated split-ring resonator.
//!
//! The pipeline runs bottom-up: [`dielectric`] permittivity models feed the
//! [`resonator`] S21 surrogate, [`dataset`] sweeps and splits it, optional
//! [`features`] reduce each trace to resonance descriptors, [`classifiers`]
//! learn oil labels and [`evaluation`] scores them.

pub mod classifiers;
pub mod dataset;
pub mod dielectric;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod matrix;
pub mod resonator;
pub mod seed;

pub use error::{Error, ErrorCategory, Result};
pub use matrix::FeatureMatrix;
