//! Physical constants and unit conversions.
//!
//! All internal computation happens in natural units (ħ = mₑ = 1, e² = α);
//! electron-volts appear only at the output boundary.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// Fine-structure constant.
    pub alpha: f64,
    /// One natural unit of energy (electron rest energy) in eV.
    pub electron_rest_energy_ev: f64,
    /// One natural unit of length (reduced Compton wavelength) in fm.
    pub fm_per_natural_length: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            alpha: 1.0 / 137.035999084,
            electron_rest_energy_ev: 510_998.950_00,
            fm_per_natural_length: 386.159_267_96,
        }
    }
}

impl PhysicalConstants {
    pub fn to_ev(&self, energy_natural: f64) -> f64 {
        energy_natural * self.electron_rest_energy_ev
    }

    pub fn from_ev(&self, energy_ev: f64) -> f64 {
        energy_ev / self.electron_rest_energy_ev
    }

    pub fn fm_to_natural(&self, length_fm: f64) -> f64 {
        length_fm / self.fm_per_natural_length
    }

    pub fn natural_to_fm(&self, length_natural: f64) -> f64 {
        length_natural * self.fm_per_natural_length
    }
}

/// Default fine-structure constant, for call sites that do not thread a
/// `PhysicalConstants` through.
pub const ALPHA: f64 = 1.0 / 137.035999084;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_in_expected_ranges() {
        let c = PhysicalConstants::default();
        assert!(c.alpha > 0.00729 && c.alpha < 0.00730);
        assert!(c.electron_rest_energy_ev > 510_998.0 && c.electron_rest_energy_ev < 511_000.0);
        assert!(c.fm_per_natural_length > 386.1 && c.fm_per_natural_length < 386.2);
    }

    #[test]
    fn to_ev_examples() {
        let c = PhysicalConstants::default();
        assert_eq!(c.to_ev(0.0), 0.0);
        assert!((c.to_ev(1.0) - 510_998.95).abs() < 0.05);
        // Back-conversion of the Table-1 scale Uehling value.
        assert!((c.to_ev(-1.831e-4) - (-93.57)).abs() < 0.1);
    }

    #[test]
    fn ev_round_trip() {
        let c = PhysicalConstants::default();
        let e = 0.7411;
        assert!((c.from_ev(c.to_ev(e)) - e).abs() < 1e-14 * e.abs());
    }
}
