//! Flat `key = value` config text.
//!
//! Frequencies are written in MHz, angles in radians, bath heating in units
//! of μ0. Missing keys take the defaults of [`ExperimentConfig::default`],
//! except `dt_s` and `n_steps`, which follow the trap actually configured.

use std::fmt::Write as _;
use std::hash::Hasher;
use std::path::Path;

use fnv::FnvHasher;
use serde::Deserialize;
use thiserror::Error;
use zigzag_core::config::{default_dt, default_sampling_steps, validate, BathParams, ValidationErrors};
use zigzag_core::units::{angular_to_mhz, mhz_to_angular};
use zigzag_core::ExperimentConfig;

/// Why a config could not be loaded.
#[derive(Debug, Error)]
pub enum ConfigError {
    /// Malformed text.
    #[error("line {line}: {message}")]
    Parse {
        /// 1-based line of the offending text.
        line: usize,
        /// Parser message.
        message: String,
    },
    /// A key that is not part of the format.
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey {
        /// The key as written.
        key: String,
        /// 1-based line.
        line: usize,
    },
    /// Well-formed but physically invalid.
    #[error("invalid config: {0}")]
    Invalid(#[from] ValidationErrors),
    /// File could not be read.
    #[error("cannot read {path}: {source}")]
    Io {
        /// Path as given.
        path: String,
        /// Underlying error.
        source: std::io::Error,
    },
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigText {
    n_ions: Option<usize>,
    alpha: Option<f64>,
    omega_z_mhz: Option<f64>,
    gamma_y: Option<f64>,
    delta_397_mhz: Option<f64>,
    delta_866_mhz: Option<f64>,
    rabi_397_mhz: Option<f64>,
    rabi_866_mhz: Option<f64>,
    theta_rad: Option<f64>,
    phi_y_rad: Option<f64>,
    e_e_over_mu0: Option<f64>,
    dt_s: Option<f64>,
    n_steps: Option<u64>,
    n_burn_in: Option<u64>,
    burn_in_friction_times: Option<f64>,
    sample_stride: Option<u64>,
    seed: Option<u64>,
    repetitions: Option<usize>,
}

/// Every key accepted in config text, in serialization order.
pub const CONFIG_KEYS: [&str; 18] = [
    "n_ions",
    "alpha",
    "omega_z_mhz",
    "gamma_y",
    "delta_397_mhz",
    "delta_866_mhz",
    "rabi_397_mhz",
    "rabi_866_mhz",
    "theta_rad",
    "phi_y_rad",
    "e_e_over_mu0",
    "dt_s",
    "n_steps",
    "n_burn_in",
    "burn_in_friction_times",
    "sample_stride",
    "seed",
    "repetitions",
];

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn unknown_key(message: &str) -> Option<String> {
    let rest = message.split("unknown field `").nth(1)?;
    Some(rest.split('`').next()?.to_string())
}

/// Parse and validate config text.
pub fn load_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let raw: ConfigText = toml::from_str(text).map_err(|e| {
        let line = e.span().map_or(1, |s| line_of(text, s.start));
        match unknown_key(e.message()) {
            Some(key) => ConfigError::UnknownKey { key, line },
            None => ConfigError::Parse { line, message: e.message().trim().to_string() },
        }
    })?;

    let mut cfg = ExperimentConfig::default();
    let set = |slot: &mut f64, v: Option<f64>| {
        if let Some(v) = v {
            *slot = v;
        }
    };
    if let Some(n) = raw.n_ions {
        cfg.n_ions = n;
    }
    set(&mut cfg.trap.alpha, raw.alpha);
    set(&mut cfg.trap.gamma_y, raw.gamma_y);
    set(&mut cfg.trap.omega_z, raw.omega_z_mhz.map(mhz_to_angular));
    set(&mut cfg.lasers.delta_397, raw.delta_397_mhz.map(mhz_to_angular));
    set(&mut cfg.lasers.delta_866, raw.delta_866_mhz.map(mhz_to_angular));
    set(&mut cfg.lasers.omega_rabi, raw.rabi_397_mhz.map(mhz_to_angular));
    set(&mut cfg.lasers.omega_rabi_repump, raw.rabi_866_mhz.map(mhz_to_angular));
    set(&mut cfg.lasers.theta, raw.theta_rad);
    set(&mut cfg.lasers.phi_y, raw.phi_y_rad);
    if let Some(e) = raw.e_e_over_mu0 {
        cfg.bath = BathParams::from_mu0(e);
    }
    set(&mut cfg.burn_in_friction_times, raw.burn_in_friction_times);
    cfg.dt = raw.dt_s.unwrap_or_else(|| default_dt(&cfg.trap, cfg.n_ions.max(1)));
    cfg.n_steps = raw.n_steps.unwrap_or_else(|| default_sampling_steps(&cfg.trap, cfg.dt));
    cfg.n_burn_in = raw.n_burn_in.unwrap_or(cfg.n_burn_in);
    cfg.sample_stride = raw.sample_stride.unwrap_or(cfg.sample_stride);
    cfg.seed = raw.seed.unwrap_or(cfg.seed);
    cfg.repetitions = raw.repetitions.unwrap_or(cfg.repetitions);
    Ok(validate(&cfg)?)
}

/// Read and parse a config file.
pub fn read_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text =
        std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    load_config(&text)
}

/// Write every key. Floats use the shortest exact representation, so
/// `load_config(&serialize_config(c)) == c` for any validated `c`.
pub fn serialize_config(cfg: &ExperimentConfig) -> String {
    let f = |v: f64| format!("{v:?}");
    let values = [
        cfg.n_ions.to_string(),
        f(cfg.trap.alpha),
        f(angular_to_mhz(cfg.trap.omega_z)),
        f(cfg.trap.gamma_y),
        f(angular_to_mhz(cfg.lasers.delta_397)),
        f(angular_to_mhz(cfg.lasers.delta_866)),
        f(angular_to_mhz(cfg.lasers.omega_rabi)),
        f(angular_to_mhz(cfg.lasers.omega_rabi_repump)),
        f(cfg.lasers.theta),
        f(cfg.lasers.phi_y),
        f(cfg.bath.in_mu0()),
        f(cfg.dt),
        cfg.n_steps.to_string(),
        cfg.n_burn_in.to_string(),
        f(cfg.burn_in_friction_times),
        cfg.sample_stride.to_string(),
        cfg.seed.to_string(),
        cfg.repetitions.to_string(),
    ];
    let mut s = String::new();
    for (key, value) in CONFIG_KEYS.iter().zip(values) {
        let _ = writeln!(s, "{key} = {value}");
    }
    s
}

/// FNV-1a digest of the serialized config, as 16 hex digits.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let mut h = FnvHasher::default();
    h.write(serialize_config(cfg).as_bytes());
    format!("{:016x}", h.finish())
}
