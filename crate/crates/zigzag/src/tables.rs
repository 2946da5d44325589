//! CSV outputs. Provenance goes in leading `# key = value` comment lines;
//! the data rows follow with a fixed header.

use std::io::{self, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// CSV read/write failures.
#[derive(Debug, Error)]
pub enum TableError {
    /// Filesystem trouble.
    #[error("{path}: {source}")]
    Io {
        /// Path as given.
        path: String,
        /// Underlying error.
        source: io::Error,
    },
    /// Malformed CSV.
    #[error(transparent)]
    Csv(#[from] csv::Error),
    /// Missing or malformed provenance line.
    #[error("missing or malformed header comment `{0}`")]
    Provenance(&'static str),
    /// Rows violate the table invariants.
    #[error("{0}")]
    Invariant(String),
}

/// One grid cell of a sweep. Column order is part of the file format.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// Cooling detuning, MHz.
    pub delta_mhz: f64,
    /// Trap anisotropy.
    pub alpha: f64,
    /// Mean order parameter over repetitions, µm.
    pub dx_mean_um: f64,
    /// Standard deviation over repetitions, µm.
    pub dx_std_um: f64,
    /// Cooling-model temperature in the xz plane, mK; empty where the
    /// lasers heat instead of cool.
    pub t_pred_mk: Option<f64>,
    /// Measured xz kinetic temperature averaged over repetitions, mK.
    pub t_kin_mk: f64,
    /// Repetitions aggregated.
    pub n_reps: usize,
    /// Carried sweep disagreed with the reverse-direction sweep here.
    pub hysteresis: bool,
}

/// A sweep with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    /// Digest of the normalized config that produced it.
    pub config_hash: String,
    /// Base seed.
    pub seed: u64,
    /// Cells in grid order (α outer, Δ inner).
    pub rows: Vec<SweepRow>,
}

fn distinct_in_order(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for v in values {
        if !out.contains(&v) {
            out.push(v);
        }
    }
    out
}

fn strictly_monotone(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] > w[0]) || v.windows(2).all(|w| w[1] < w[0])
}

impl SweepResult {
    /// Distinct detunings in file order.
    pub fn deltas_mhz(&self) -> Vec<f64> {
        distinct_in_order(self.rows.iter().map(|r| r.delta_mhz))
    }

    /// Distinct anisotropies in file order.
    pub fn alphas(&self) -> Vec<f64> {
        distinct_in_order(self.rows.iter().map(|r| r.alpha))
    }

    /// Rows at one anisotropy, in file order.
    pub fn row_at_alpha(&self, alpha: f64) -> Vec<SweepRow> {
        self.rows.iter().filter(|r| r.alpha == alpha).copied().collect()
    }

    /// Every cell has at least one repetition and both grids are strictly
    /// monotone.
    pub fn check(&self) -> Result<(), TableError> {
        if let Some(r) = self.rows.iter().find(|r| r.n_reps == 0) {
            return Err(TableError::Invariant(format!(
                "cell (delta {}, alpha {}) has no repetitions",
                r.delta_mhz, r.alpha
            )));
        }
        if !strictly_monotone(&self.deltas_mhz()) || !strictly_monotone(&self.alphas()) {
            return Err(TableError::Invariant("grid is not strictly monotone".into()));
        }
        Ok(())
    }

    /// Serialize to CSV bytes.
    pub fn to_csv(&self) -> Result<Vec<u8>, TableError> {
        let seed = self.seed.to_string();
        to_csv(&[("config_hash", self.config_hash.as_str()), ("seed", seed.as_str())], &self.rows)
    }

    /// Parse CSV bytes produced by [`SweepResult::to_csv`].
    pub fn from_csv(bytes: &[u8]) -> Result<Self, TableError> {
        let (meta, rows) = from_csv::<SweepRow>(bytes)?;
        let lookup = |key: &'static str| {
            meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.clone()).ok_or(TableError::Provenance(key))
        };
        let config_hash = lookup("config_hash")?;
        let seed = lookup("seed")?.parse().map_err(|_| TableError::Provenance("seed"))?;
        let out = Self { config_hash, seed, rows };
        out.check()?;
        Ok(out)
    }
}

/// β(Δ) and the predicted temperature along it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoolingRow {
    /// Cooling detuning, MHz.
    pub delta_mhz: f64,
    /// Beam friction in units of β0.
    pub beta_over_beta0: f64,
    /// Predicted xz temperature, mK; empty where β ≤ 0.
    pub t_pred_mk: Option<f64>,
}

/// One normal mode of the zero-temperature crystal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeRow {
    /// Trap anisotropy.
    pub alpha: f64,
    /// Index in ascending ω² order.
    pub mode_index: usize,
    /// Signed ordinary frequency, MHz; negative marks an unstable mode.
    pub freq_mhz: f64,
}

/// One ion at one sampled time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    /// Time since the start of sampling, s.
    pub time_s: f64,
    /// Ion label.
    pub ion_index: usize,
    /// Position, µm.
    pub x_um: f64,
    /// Position, µm.
    pub y_um: f64,
    /// Position, µm.
    pub z_um: f64,
}

/// A straight-line fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    /// Slope.
    pub slope: f64,
    /// Intercept.
    pub intercept: f64,
    /// Coefficient of determination.
    pub r2: f64,
    /// Points fitted.
    pub n: usize,
}

/// Critical detunings and temperatures at one anisotropy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocusRow {
    /// Trap anisotropy.
    pub alpha: f64,
    /// Zero-temperature zigzag dx at this α, µm.
    pub dx_zero_um: f64,
    /// Largest smoothed dx along the Δ line, µm.
    pub dx_peak_um: f64,
    /// Detuning where the zigzag appears, MHz.
    pub delta_rise_mhz: Option<f64>,
    /// Detuning where it disappears again, MHz.
    pub delta_fall_mhz: Option<f64>,
    /// Kinetic temperature at the rising edge, mK.
    pub t_c_rise_mk: Option<f64>,
    /// Kinetic temperature at the falling edge, mK.
    pub t_c_fall_mk: Option<f64>,
    /// Mean of the edge temperatures found, mK.
    pub t_c_mk: Option<f64>,
}

/// Serialize rows with `# key = value` provenance lines first.
pub fn to_csv<T: Serialize>(meta: &[(&str, &str)], rows: &[T]) -> Result<Vec<u8>, TableError> {
    let mut buf = Vec::new();
    for (k, v) in meta {
        writeln!(buf, "# {k} = {v}").expect("writing to a Vec cannot fail");
    }
    let mut w = csv::Writer::from_writer(buf);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|source| TableError::Io { path: "<memory>".into(), source })?;
    w.into_inner().map_err(|e| TableError::Io { path: "<memory>".into(), source: e.into_error() })
}

/// `# key = value` lines found above a table.
pub type Provenance = Vec<(String, String)>;

/// Parse rows and the provenance comments that precede them.
pub fn from_csv<T: DeserializeOwned>(bytes: &[u8]) -> Result<(Provenance, Vec<T>), TableError> {
    let text = std::str::from_utf8(bytes).map_err(|_| TableError::Invariant("not UTF-8".into()))?;
    let meta = text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .filter_map(|l| {
            let (k, v) = l.trim_start_matches('#').split_once('=')?;
            Some((k.trim().to_string(), v.trim().to_string()))
        })
        .collect();
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(bytes);
    let rows = r.deserialize().collect::<Result<Vec<T>, _>>()?;
    Ok((meta, rows))
}

/// Write bytes to `path`; the parent directory must already exist.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), TableError> {
    std::fs::write(path, bytes).map_err(|source| TableError::Io { path: path.display().to_string(), source })
}
