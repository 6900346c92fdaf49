//! Two-loop vacuum-polarization corrections to the Lamb shift in
//! hydrogen-like high-Z ions.
//!
//! The library computes, to all orders in the nuclear Coulomb coupling, the
//! loop-inside-loop vacuum-polarization correction to K- and L-shell binding
//! energies: the first-order (Uehling-type) pieces through the χₙ kernel
//! machinery, the Wichmann-Kroll induced charge density through partial-wave
//! Dirac Green functions at imaginary energy, and the spectral-subtraction
//! remainder through discretized cavity spectra.

pub mod chi;
pub mod cli;
pub mod consts;
pub mod dirac;
pub mod error;
pub mod greens;
pub mod grid;
pub mod nuclear;
pub mod quad;
pub mod twoloop;

pub use error::{Result, VpError};
