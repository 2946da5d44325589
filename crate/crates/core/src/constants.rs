//! CODATA constants and the reference units used for reporting.

/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Boltzmann constant, J/K.
pub const K_B: f64 = 1.380_649e-23;
/// Elementary charge, C.
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// Vacuum permittivity, F/m.
pub const EPSILON_0: f64 = 8.854_187_812_8e-12;
/// Unified atomic mass unit, kg.
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;

/// Reference bath-heating intensity, N²·s/kg.
pub const MU0: f64 = 1e-21;
/// Reference friction coefficient, N·s/m.
pub const BETA0: f64 = 1e-21;

/// Coulomb coupling `q²/(4πε₀)` for two charges `q`, J·m.
pub fn coulomb_coupling(charge: f64) -> f64 {
    charge * charge / (4.0 * core::f64::consts::PI * EPSILON_0)
}
