//! Experiment configuration and validation.
//!
//! All frequencies are stored as angular frequencies (rad/s). Text formats
//! speak ordinary MHz and convert through [`crate::units`].

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;

use crate::constants::MU0;
use crate::species::{default_ca40, IonSpecies};
use crate::statics;
use crate::units::{exact_quotient, mhz_to_angular, snap_angular};

/// Harmonic pseudopotential frequencies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrapParams {
    /// Axial angular frequency, rad/s.
    pub omega_z: f64,
    /// ω_x / ω_z.
    pub alpha: f64,
    /// ω_y / ω_z.
    pub gamma_y: f64,
}

impl TrapParams {
    /// ω_x, rad/s.
    pub fn omega_x(&self) -> f64 {
        self.alpha * self.omega_z
    }

    /// ω_y, rad/s.
    pub fn omega_y(&self) -> f64 {
        self.gamma_y * self.omega_z
    }

    /// Squared angular frequencies in (x, y, z) order.
    pub fn omega_squared(&self) -> [f64; 3] {
        let wx = self.omega_x();
        let wy = self.omega_y();
        [wx * wx, wy * wy, self.omega_z * self.omega_z]
    }

    /// Same trap with a different anisotropy.
    pub fn with_alpha(&self, alpha: f64) -> Self {
        Self { alpha, ..*self }
    }
}

impl Default for TrapParams {
    fn default() -> Self {
        Self { omega_z: mhz_to_angular(DEFAULT_OMEGA_Z_MHZ), alpha: 3.205, gamma_y: 10.0 }
    }
}

/// Axial trap frequency used when the config does not give one, MHz.
pub const DEFAULT_OMEGA_Z_MHZ: f64 = 4.0;

/// Cooling (397 nm) and repump (866 nm) laser settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaserParams {
    /// Rabi frequency on S–P, rad/s.
    pub omega_rabi: f64,
    /// Rabi frequency on D–P, rad/s.
    pub omega_rabi_repump: f64,
    /// Cooling detuning Δ, rad/s.
    pub delta_397: f64,
    /// Repump detuning δ, rad/s.
    pub delta_866: f64,
    /// Angle between the cooling beam and the z axis, rad.
    pub theta: f64,
    /// Tilt of the repump beam out of the xz plane, rad.
    pub phi_y: f64,
}

impl LaserParams {
    /// Same lasers at a different cooling detuning (rad/s).
    pub fn with_delta_397(&self, delta_397: f64) -> Self {
        Self { delta_397, ..*self }
    }
}

impl Default for LaserParams {
    fn default() -> Self {
        Self {
            omega_rabi: mhz_to_angular(78.0),
            omega_rabi_repump: mhz_to_angular(50.0),
            delta_397: mhz_to_angular(-40.0),
            delta_866: mhz_to_angular(110.0),
            theta: PI / 4.0,
            phi_y: PI / 36.0,
        }
    }
}

/// White-noise heating from the electrodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BathParams {
    /// Force-noise intensity per unit mass, N²·s/kg.
    pub e_e: f64,
}

impl BathParams {
    /// Build from a multiple of [`MU0`].
    pub fn from_mu0(multiple: f64) -> Self {
        Self { e_e: multiple * MU0 }
    }

    /// `e_e` in units of [`MU0`].
    pub fn in_mu0(&self) -> f64 {
        exact_quotient(self.e_e, MU0)
    }
}

impl Default for BathParams {
    fn default() -> Self {
        Self::from_mu0(13.0)
    }
}

/// One virtual experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Ion constants.
    pub species: IonSpecies,
    /// Trap frequencies.
    pub trap: TrapParams,
    /// Laser settings.
    pub lasers: LaserParams,
    /// Bath heating.
    pub bath: BathParams,
    /// Number of ions.
    pub n_ions: usize,
    /// Integration step, s.
    pub dt: f64,
    /// Steps in the sampling window of each trajectory.
    pub n_steps: u64,
    /// Minimum burn-in steps discarded before sampling.
    pub n_burn_in: u64,
    /// Burn-in is extended to cover this many slowest friction times `m/β`.
    pub burn_in_friction_times: f64,
    /// Steps between recorded samples.
    pub sample_stride: u64,
    /// Master seed for all random streams.
    pub seed: u64,
    /// Independent repetitions per grid cell.
    pub repetitions: usize,
}

/// Step size factor: `dt = DT_FACTOR / ω_max`.
pub const DT_FACTOR: f64 = 0.08;
/// Length of the default sampling window in axial periods.
pub const SAMPLING_AXIAL_PERIODS: f64 = 800.0;
/// Minimum burn-in floor in steps.
pub const DEFAULT_BURN_IN_STEPS: u64 = 100_000;
/// Default burn-in length in friction times.
pub const DEFAULT_BURN_IN_FRICTION_TIMES: f64 = 2.0;
/// Largest admissible `dt · ω_max`.
pub const MAX_DT_OMEGA: f64 = 0.1;

/// Highest normal-mode angular frequency of an `n_ions` crystal, rad/s.
///
/// Taken as the largest of ω_y, ω_x and the top axial mode of the linear
/// chain; transverse branches of the chain never exceed their COM mode.
pub fn max_mode_frequency(trap: &TrapParams, n_ions: usize) -> f64 {
    let axial = statics::axial_mode_ceiling(n_ions);
    trap.omega_z * trap.gamma_y.max(trap.alpha).max(axial)
}

/// Default integration step for a trap and crystal size, s.
pub fn default_dt(trap: &TrapParams, n_ions: usize) -> f64 {
    DT_FACTOR / max_mode_frequency(trap, n_ions)
}

/// Default number of sampling steps: a fixed number of axial periods.
pub fn default_sampling_steps(trap: &TrapParams, dt: f64) -> u64 {
    libm::ceil(SAMPLING_AXIAL_PERIODS * 2.0 * PI / (trap.omega_z * dt)) as u64
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let trap = TrapParams::default();
        let n_ions = 7;
        let dt = default_dt(&trap, n_ions);
        Self {
            species: default_ca40(),
            trap,
            lasers: LaserParams::default(),
            bath: BathParams::default(),
            n_ions,
            dt,
            n_steps: default_sampling_steps(&trap, dt),
            n_burn_in: DEFAULT_BURN_IN_STEPS,
            burn_in_friction_times: DEFAULT_BURN_IN_FRICTION_TIMES,
            sample_stride: 10,
            seed: 1,
            repetitions: 50,
        }
    }
}

/// One violated invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    /// Dotted path of the offending field, e.g. `trap.alpha`.
    pub field: &'static str,
    /// Human-readable reason.
    pub message: String,
}

/// Every invariant violation found in a config.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationErrors(pub Vec<FieldError>);

impl fmt::Display for ValidationErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{}: {}", e.field, e.message)?;
        }
        Ok(())
    }
}

impl core::error::Error for ValidationErrors {}

struct Checker(Vec<FieldError>);

impl Checker {
    fn require(&mut self, ok: bool, field: &'static str, message: &str) {
        if !ok {
            self.0.push(FieldError { field, message: message.to_string() });
        }
    }

    fn finite(&mut self, value: f64, field: &'static str) -> bool {
        self.require(value.is_finite(), field, "must be finite");
        value.is_finite()
    }
}

/// Check every invariant and return the normalized config.
///
/// Normalization snaps angular frequencies onto values exactly reachable
/// from MHz text, so the result survives a text round trip unchanged.
pub fn validate(config: &ExperimentConfig) -> Result<ExperimentConfig, ValidationErrors> {
    let mut c = Checker(Vec::new());
    let s = &config.species;
    for (v, f) in [
        (s.mass, "species.mass"),
        (s.charge, "species.charge"),
        (s.gamma1, "species.gamma1"),
        (s.k1, "species.k1"),
        (s.k2, "species.k2"),
    ] {
        if c.finite(v, f) {
            c.require(v > 0.0, f, "must be positive");
        }
    }
    c.require(s.k1 > s.k2, "species.k1", "must exceed k2");
    c.require(s.leak_fraction > 0.0 && s.leak_fraction < 1.0, "species.leak_fraction", "must lie in (0, 1)");

    let t = &config.trap;
    if c.finite(t.omega_z, "trap.omega_z") {
        c.require(t.omega_z > 0.0, "trap.omega_z", "must be positive");
    }
    if c.finite(t.alpha, "trap.alpha") {
        c.require(t.alpha > 1.0, "trap.alpha", "alpha must exceed 1");
    }
    if c.finite(t.gamma_y, "trap.gamma_y") {
        c.require(t.gamma_y > t.alpha, "trap.gamma_y", "gamma_y must exceed alpha");
    }

    let l = &config.lasers;
    for (v, f) in [(l.omega_rabi, "lasers.omega_rabi"), (l.omega_rabi_repump, "lasers.omega_rabi_repump")] {
        if c.finite(v, f) {
            c.require(v >= 0.0, f, "must be non-negative");
        }
    }
    c.finite(l.delta_397, "lasers.delta_397");
    c.finite(l.delta_866, "lasers.delta_866");
    if c.finite(l.theta, "lasers.theta") {
        c.require((0.0..PI / 2.0).contains(&l.theta), "lasers.theta", "must lie in [0, pi/2)");
    }
    if c.finite(l.phi_y, "lasers.phi_y") {
        c.require((0.0..PI / 4.0).contains(&l.phi_y), "lasers.phi_y", "must lie in [0, pi/4)");
    }

    if c.finite(config.bath.e_e, "bath.e_e") {
        c.require(config.bath.e_e >= 0.0, "bath.e_e", "must be non-negative");
    }

    c.require(config.n_ions >= 1, "n_ions", "must be at least 1");
    c.require(config.repetitions >= 1, "repetitions", "must be at least 1");
    c.require(config.sample_stride >= 1, "sample_stride", "must be at least 1");
    if c.finite(config.burn_in_friction_times, "burn_in_friction_times") {
        c.require(config.burn_in_friction_times >= 0.0, "burn_in_friction_times", "must be non-negative");
    }
    if c.finite(config.dt, "dt") {
        c.require(config.dt > 0.0, "dt", "must be positive");
        if config.dt > 0.0 && t.omega_z > 0.0 && t.alpha.is_finite() && t.gamma_y.is_finite() {
            let w_max = max_mode_frequency(t, config.n_ions.max(1));
            c.require(config.dt * w_max < MAX_DT_OMEGA, "dt", "dt too large");
        }
    }

    if !c.0.is_empty() {
        return Err(ValidationErrors(c.0));
    }
    let mut out = config.clone();
    out.trap.omega_z = snap_angular(t.omega_z);
    out.lasers.omega_rabi = snap_angular(l.omega_rabi);
    out.lasers.omega_rabi_repump = snap_angular(l.omega_rabi_repump);
    out.lasers.delta_397 = snap_angular(l.delta_397);
    out.lasers.delta_866 = snap_angular(l.delta_866);
    out.bath = BathParams::from_mu0(config.bath.in_mu0());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fields(err: &ValidationErrors) -> Vec<&'static str> {
        err.0.iter().map(|e| e.field).collect()
    }

    #[test]
    fn paper_alpha_at_100_khz_is_accepted() {
        let mut cfg = ExperimentConfig::default();
        cfg.trap.omega_z = mhz_to_angular(0.1);
        cfg.trap.alpha = 3.205;
        cfg.dt = default_dt(&cfg.trap, cfg.n_ions);
        assert!(validate(&cfg).is_ok());
    }

    #[test]
    fn alpha_below_one_is_rejected() {
        let mut cfg = ExperimentConfig::default();
        cfg.trap.alpha = 0.5;
        let err = validate(&cfg).unwrap_err();
        assert_eq!(fields(&err), ["trap.alpha"]);
        assert_eq!(err.0[0].message, "alpha must exceed 1");
    }

    #[test]
    fn one_second_step_is_too_large() {
        let mut cfg = ExperimentConfig::default();
        cfg.trap.omega_z = mhz_to_angular(0.1);
        cfg.dt = 1.0;
        let err = validate(&cfg).unwrap_err();
        assert!(err.0.iter().any(|e| e.field == "dt" && e.message == "dt too large"));
    }

    #[test]
    #[allow(clippy::field_reassign_with_default)]
    fn every_violation_is_reported() {
        let mut cfg = ExperimentConfig::default();
        cfg.n_ions = 0;
        cfg.repetitions = 0;
        cfg.bath.e_e = -1.0;
        cfg.lasers.theta = 2.0;
        let err = validate(&cfg).unwrap_err();
        let f = fields(&err);
        for want in ["n_ions", "repetitions", "bath.e_e", "lasers.theta"] {
            assert!(f.contains(&want), "{want} missing from {f:?}");
        }
    }

    #[test]
    fn y_confinement_must_dominate() {
        let mut cfg = ExperimentConfig::default();
        cfg.trap.gamma_y = 3.0;
        assert_eq!(fields(&validate(&cfg).unwrap_err()), ["trap.gamma_y"]);
    }

    #[test]
    fn defaults_validate() {
        let cfg = ExperimentConfig::default();
        let checked = validate(&cfg).unwrap();
        assert!(checked.dt * max_mode_frequency(&checked.trap, 7) < MAX_DT_OMEGA);
    }

    proptest! {
        #[test]
        fn validate_is_idempotent(
            alpha in 1.01f64..5.0,
            wz in 0.05f64..5.0,
            delta in -150.0f64..20.0,
            rabi in 0.0f64..200.0,
            ee in 0.0f64..50.0,
        ) {
            let mut cfg = ExperimentConfig::default();
            cfg.trap.alpha = alpha;
            cfg.trap.omega_z = 2.0 * PI * wz * 1e6;
            cfg.lasers.delta_397 = 2.0 * PI * delta * 1e6;
            cfg.lasers.omega_rabi = 2.0 * PI * rabi * 1e6;
            cfg.bath = BathParams::from_mu0(ee);
            cfg.dt = default_dt(&cfg.trap, cfg.n_ions);
            let once = validate(&cfg).unwrap();
            let twice = validate(&once).unwrap();
            prop_assert_eq!(once, twice);
        }
    }
}
