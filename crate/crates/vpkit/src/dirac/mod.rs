//! Radial Dirac machinery: central-potential abstraction, bound states via
//! shooting, and complete cavity spectra for spectral sums.

pub mod cavity;
pub mod potential;
pub mod shoot;

pub use potential::{
    CentralPotential, NuclearPotential, ScaledPotential, SumPotential, TabulatedPotential,
    ZeroPotential,
};
pub use shoot::{analytic_coulomb_energy, solve_bound_state, BoundState, ShootParams};
