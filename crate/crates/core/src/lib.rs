//! Numerical verification of negative-imaginary, counterclockwise and
//! IQC-type properties of dynamical systems and of their positive-feedback
//! interconnections.

pub mod battery;
pub mod error;
pub mod feedback;
pub mod iqc;
pub mod linalg;
pub mod ni_analysis;
pub mod report;
pub mod signal;
pub mod sysmodel;

pub use error::{Error, Result};
