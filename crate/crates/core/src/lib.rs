//! Physics core for simulating the temperature-driven linear/zigzag
//! transition of a small laser-cooled ⁴⁰Ca⁺ crystal.
//!
//! Everything in this crate is pure computation over `alloc` collections:
//! the Λ-system cooling model, zero-temperature statics and normal modes,
//! Langevin dynamics with a splitting integrator, and the observables used
//! to locate transitions. File formats, the CLI and parallel orchestration
//! live in the `zigzag` crate.

#![cfg_attr(not(test), no_std)]
#![warn(missing_docs)]
// `!(x > y)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod config;
pub mod constants;
pub mod cooling;
pub mod dynamics;
pub mod observables;
pub mod rng;
pub mod species;
pub mod statics;
pub mod units;

pub use config::{BathParams, ExperimentConfig, LaserParams, TrapParams};
pub use cooling::{CoolingResponse, LambdaSteadyState};
pub use dynamics::{CrystalState, TrajectorySummary};
pub use species::IonSpecies;
pub use statics::{EquilibriumConfiguration, ModeSpectrum};

/// Cartesian 3-vector used for positions, velocities and per-axis data.
pub type Vec3 = nalgebra::Vector3<f64>;
