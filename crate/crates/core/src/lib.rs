//! Exact decomposition of the change in a frequency-weighted mean.
//!
//! The finite-difference product rule `Δ(b·x) = b·Δx + x'·Δb` applied to
//! - weighted regression means (Oaxaca-Blinder style, [`decomposition`]),
//! - mean fitness in a haploid population ([`fisher`]),
//! - a population mean with paired entities ([`price`]).
//!
//! Every identity is checked numerically at the tolerances in [`tolerance`].

pub mod algebra;
pub mod cli;
pub mod decomposition;
pub mod error;
pub mod fisher;
pub mod price;
pub mod regression;
pub mod sample;
pub mod tolerance;
pub mod verify;

pub use error::{Error, Result};
