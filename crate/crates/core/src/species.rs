//! Ion species constants.

use crate::constants::{ATOMIC_MASS_UNIT, ELEMENTARY_CHARGE};
use core::f64::consts::PI;

/// Mass, charge and the optical constants of the cooling Λ system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IonSpecies {
    /// kg
    pub mass: f64,
    /// C
    pub charge: f64,
    /// Decay rate of the excited state, rad/s.
    pub gamma1: f64,
    /// Cooling-laser wavenumber, 1/m.
    pub k1: f64,
    /// Repump-laser wavenumber, 1/m.
    pub k2: f64,
    /// Branching fraction of excited-state decay into the metastable level.
    pub leak_fraction: f64,
}

/// Lifetime of 4P₁/₂, s.
pub const CA40_P_LIFETIME: f64 = 7.1e-9;
/// Cooling transition 4S₁/₂ ↔ 4P₁/₂, m.
pub const CA40_COOLING_WAVELENGTH: f64 = 397e-9;
/// Repump transition 3D₃/₂ ↔ 4P₁/₂, m.
pub const CA40_REPUMP_WAVELENGTH: f64 = 866e-9;
/// Share of 4P₁/₂ decays that land in 3D₃/₂.
pub const CA40_LEAK_FRACTION: f64 = 0.06;

/// ⁴⁰Ca⁺: mass 40 u, Γ₁ = 1/τ(4P₁/₂), k₁ = 2π/397 nm, k₂ = 2π/866 nm,
/// 6 % leakage into 3D₃/₂.
pub fn default_ca40() -> IonSpecies {
    IonSpecies {
        mass: 40.0 * ATOMIC_MASS_UNIT,
        charge: ELEMENTARY_CHARGE,
        gamma1: 1.0 / CA40_P_LIFETIME,
        k1: 2.0 * PI / CA40_COOLING_WAVELENGTH,
        k2: 2.0 * PI / CA40_REPUMP_WAVELENGTH,
        leak_fraction: CA40_LEAK_FRACTION,
    }
}

impl Default for IonSpecies {
    fn default() -> Self {
        default_ca40()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ca40_constants() {
        let s = default_ca40();
        assert_relative_eq!(s.mass, 6.642e-26, max_relative = 1e-3);
        assert_relative_eq!(s.gamma1, 1.408e8, max_relative = 1e-3);
        assert_relative_eq!(s.k1, 1.583e7, max_relative = 1e-3);
        assert!(s.k1 > s.k2 && s.k2 > 0.0);
        assert!(s.leak_fraction > 0.0 && s.leak_fraction < 1.0);
    }
}
