//! Homodyne measurement of phonon number in a quadratically coupled
//! optomechanical system: unconditional and conditional dynamics, record
//! processing and the regime conditions for resolving quantum jumps.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod error;
pub mod hilbert;
pub mod lindblad;
pub mod record;
pub mod regimes;
pub mod sme;
pub mod stats;

pub use error::{Error, Result};
