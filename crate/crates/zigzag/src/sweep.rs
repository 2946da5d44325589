//! Parallel sweeps over (α, Δ) grids.
//!
//! Every repetition of every cell draws from its own stream, keyed by
//! `(seed, cell, repetition)`, and results are gathered in grid order, so the
//! output does not depend on how many workers ran it. Carried sweeps chain a
//! state through a line of cells; their stream is keyed by the line instead.

use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use thiserror::Error;
use zigzag_core::config::BathParams;
use zigzag_core::cooling::{CoolingCache, CoolingError};
use zigzag_core::dynamics::{
    run_trajectory_with, CrystalState, DynamicsError, Segment, SweepMode, Trajectory, TrajectorySummary,
};
use zigzag_core::observables::{
    detect_transitions, kinetic_temperature, linear_fit, order_parameter_dx, smooth, summary_dx, window_edges, Axes,
    CalibrationMap, EdgeDirection, LinearFit, ObservableError, TransitionEstimate, DEFAULT_SIGNIFICANCE,
};
use zigzag_core::rng::stream;
use zigzag_core::statics::{equilibrium_positions, SeedPolicy, StaticsError};
use zigzag_core::units::mhz_to_angular;
use zigzag_core::ExperimentConfig;

use crate::config_file::config_hash;
use crate::tables::{LocusRow, SweepResult, SweepRow};

/// Environment variable overriding the worker count.
pub const WORKERS_ENV: &str = "ZIGZAG_WORKERS";

/// Sweep failures.
#[derive(Debug, Error)]
pub enum SweepError {
    /// The requested grid has no usable points.
    #[error("empty grid: {0}")]
    EmptyGrid(String),
    /// A trajectory blew up.
    #[error("simulation unstable at delta = {delta_mhz} MHz, alpha = {alpha}, repetition {repetition}: {source}")]
    Unstable {
        /// Cell detuning, MHz.
        delta_mhz: f64,
        /// Cell anisotropy.
        alpha: f64,
        /// Repetition index.
        repetition: usize,
        /// What went wrong.
        source: DynamicsError,
    },
    /// Cooling model failed at a cell.
    #[error("cooling model failed at delta = {delta_mhz} MHz: {source}")]
    Cooling {
        /// Cell detuning, MHz.
        delta_mhz: f64,
        /// What went wrong.
        source: CoolingError,
    },
    /// Analysis of the sweep failed.
    #[error(transparent)]
    Observable(#[from] ObservableError),
    /// The zero-temperature crystal could not be found.
    #[error("statics failed at alpha = {alpha}: {source}")]
    Statics {
        /// Anisotropy of the failed search.
        alpha: f64,
        /// Underlying failure.
        source: StaticsError,
    },
    /// Worker pool could not start or the worker variable is malformed.
    #[error("worker pool: {0}")]
    Workers(String),
}

/// How a sweep is run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepOptions {
    /// Fresh restarts or a carried state.
    pub mode: SweepMode,
    /// Repetitions per cell.
    pub repetitions: usize,
    /// Worker count; `None` reads [`WORKERS_ENV`], then uses all cores.
    pub workers: Option<usize>,
    /// Print progress to standard error.
    pub progress: bool,
}

impl SweepOptions {
    /// Fresh mode with the config's repetitions.
    pub fn fresh(config: &ExperimentConfig) -> Self {
        Self { mode: SweepMode::Fresh, repetitions: config.repetitions, workers: None, progress: false }
    }
}

/// Points `start, start + step, …` up to `end` inclusive. `start == end`
/// gives one point; a step that does not fit inside the range is an error.
pub fn grid(start: f64, end: f64, step: f64) -> Result<Vec<f64>, SweepError> {
    if !(start.is_finite() && end.is_finite() && step.is_finite()) {
        return Err(SweepError::EmptyGrid("non-finite bounds".into()));
    }
    if start == end {
        return Ok(vec![start]);
    }
    let span = end - start;
    if step == 0.0 || span.signum() != step.signum() || step.abs() > span.abs() {
        return Err(SweepError::EmptyGrid(format!("step {step} does not fit in [{start}, {end}]")));
    }
    let n = (span / step + 1e-9).floor() as usize + 1;
    // Round away the drift of start + k·step so printed grids stay tidy.
    Ok((0..n).map(|k| ((start + k as f64 * step) * 1e9).round() / 1e9).collect())
}

/// Resolve the worker count: explicit, then [`WORKERS_ENV`], then all cores.
pub fn worker_count(explicit: Option<usize>) -> Result<usize, SweepError> {
    if let Some(n) = explicit {
        return if n == 0 { Err(SweepError::Workers("worker count must be positive".into())) } else { Ok(n) };
    }
    match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| SweepError::Workers(format!("{WORKERS_ENV}={v} is not a positive integer"))),
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn in_pool<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R, SweepError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count(workers)?)
        .build()
        .map_err(|e| SweepError::Workers(e.to_string()))?;
    Ok(pool.install(f))
}

struct Progress<'a> {
    label: &'a str,
    total: usize,
    done: AtomicUsize,
    enabled: bool,
}

impl Progress<'_> {
    fn tick(&self) {
        let k = self.done.fetch_add(1, Ordering::Relaxed) + 1;
        let every = (self.total / 20).max(1);
        if self.enabled && (k.is_multiple_of(every) || k == self.total) {
            eprintln!("{}: {k}/{} trajectories", self.label, self.total);
        }
    }
}

/// One grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    /// Cooling detuning, MHz.
    pub delta_mhz: f64,
    /// Trap anisotropy.
    pub alpha: f64,
}

impl Cell {
    fn config(&self, base: &ExperimentConfig) -> ExperimentConfig {
        let mut cfg = base.clone();
        cfg.trap = cfg.trap.with_alpha(self.alpha);
        cfg.lasers = cfg.lasers.with_delta_397(mhz_to_angular(self.delta_mhz));
        cfg
    }
}

/// Per-repetition observables.
#[derive(Debug, Clone, Copy, PartialEq)]
struct RepOutcome {
    dx_um: f64,
    t_kin_mk: f64,
}

fn outcome(summary: &TrajectorySummary, cfg: &ExperimentConfig) -> Result<RepOutcome, ObservableError> {
    Ok(RepOutcome {
        dx_um: summary_dx(summary) * 1e6,
        t_kin_mk: kinetic_temperature(summary, cfg.species.mass, Axes::XZ)? * 1e3,
    })
}

fn unstable(cell: &Cell, repetition: usize) -> impl FnOnce(DynamicsError) -> SweepError + '_ {
    move |source| match source {
        DynamicsError::Cooling(source) => SweepError::Cooling { delta_mhz: cell.delta_mhz, source },
        source => SweepError::Unstable { delta_mhz: cell.delta_mhz, alpha: cell.alpha, repetition, source },
    }
}

fn run_fresh(
    base: &ExperimentConfig,
    cell: &Cell,
    stream_cell: u64,
    repetition: usize,
) -> Result<RepOutcome, SweepError> {
    let cfg = cell.config(base);
    let mut rng = stream(base.seed, stream_cell, repetition as u64);
    let schedule = [Segment { lasers: cfg.lasers, steps: cfg.n_steps }];
    let summary = run_trajectory_with(&cfg, &schedule, &mut rng, |_| {}).map_err(unstable(cell, repetition))?;
    Ok(outcome(&summary, &cfg)?)
}

fn run_carried(
    base: &ExperimentConfig,
    cells: &[Cell],
    stream_line: u64,
    repetition: usize,
    progress: &Progress<'_>,
) -> Result<Vec<RepOutcome>, SweepError> {
    let mut rng = stream(base.seed, stream_line, repetition as u64);
    let mut state: Option<CrystalState> = None;
    let mut out = Vec::with_capacity(cells.len());
    for cell in cells {
        let cfg = cell.config(base);
        let err = |e| unstable(cell, repetition)(e);
        let mut traj = match state.take() {
            None => {
                let mut t = Trajectory::fresh(&cfg, &cfg.lasers, &mut rng).map_err(err)?;
                let burn = t.burn_in_steps();
                t.advance(burn, &mut rng).map_err(err)?;
                t
            }
            Some(s) => {
                let mut t = Trajectory::from_state(&cfg, s, &cfg.lasers).map_err(err)?;
                t.advance(cfg.n_burn_in, &mut rng).map_err(err)?;
                t
            }
        };
        let summary = traj.sample(cfg.n_steps, &mut rng, |_| {}).map_err(err)?;
        out.push(outcome(&summary, &cfg)?);
        state = Some(traj.into_state());
        progress.tick();
    }
    Ok(out)
}

struct CellStats {
    mean: f64,
    std: f64,
    t_kin: f64,
    n: usize,
}

fn stats(reps: &[RepOutcome]) -> CellStats {
    let n = reps.len();
    let mean = reps.iter().map(|r| r.dx_um).sum::<f64>() / n as f64;
    let var = if n > 1 { reps.iter().map(|r| (r.dx_um - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
    let t_kin = reps.iter().map(|r| r.t_kin_mk).sum::<f64>() / n as f64;
    CellStats { mean, std: var.sqrt(), t_kin, n }
}

fn predicted_mk(base: &ExperimentConfig, cell: &Cell) -> Result<Option<f64>, SweepError> {
    let cfg = cell.config(base);
    let mut cache = CoolingCache::new(cfg.species, cfg.bath);
    let r = cache.response(&cfg.lasers).map_err(|source| SweepError::Cooling { delta_mhz: cell.delta_mhz, source })?;
    let tx = r.axis_temperature(0, cfg.species.mass, &cfg.bath);
    let tz = r.axis_temperature(2, cfg.species.mass, &cfg.bath);
    Ok(tx.zip(tz).map(|(a, b)| 0.5 * (a + b) * 1e3))
}

/// Sweep an explicit list of cells. `lines` partitions the cells into
/// contiguous runs that a carried sweep chains through (ignored for fresh
/// sweeps). `stream_offset` shifts the cell/line stream keys so that
/// several sweeps sharing one seed stay independent.
pub fn sweep_cells(
    config: &ExperimentConfig,
    cells: &[Cell],
    lines: &[std::ops::Range<usize>],
    options: &SweepOptions,
    stream_offset: u64,
    label: &str,
) -> Result<SweepResult, SweepError> {
    if cells.is_empty() {
        return Err(SweepError::EmptyGrid("no cells".into()));
    }
    let reps = options.repetitions.max(1);
    let t_pred: Vec<Option<f64>> = cells.iter().map(|c| predicted_mk(config, c)).collect::<Result<_, _>>()?;

    let (forward, hysteresis) = match options.mode {
        SweepMode::Fresh => {
            let progress =
                Progress { label, total: cells.len() * reps, done: AtomicUsize::new(0), enabled: options.progress };
            let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..reps).map(move |r| (c, r))).collect();
            let flat = in_pool(options.workers, || {
                jobs.par_iter()
                    .map(|&(c, r)| {
                        let o = run_fresh(config, &cells[c], stream_offset + c as u64, r);
                        progress.tick();
                        o
                    })
                    .collect::<Result<Vec<_>, _>>()
            })??;
            let per_cell: Vec<Vec<RepOutcome>> = flat.chunks(reps).map(<[RepOutcome]>::to_vec).collect();
            (per_cell, vec![false; cells.len()])
        }
        SweepMode::Carried => {
            let progress =
                Progress { label, total: 2 * cells.len() * reps, done: AtomicUsize::new(0), enabled: options.progress };
            let n_lines = lines.len() as u64;
            // (line, reversed, repetition)
            let jobs: Vec<(usize, bool, usize)> = (0..lines.len())
                .flat_map(|l| [false, true].into_iter().flat_map(move |rev| (0..reps).map(move |r| (l, rev, r))))
                .collect();
            let runs = in_pool(options.workers, || {
                jobs.par_iter()
                    .map(|&(l, rev, r)| {
                        let mut line: Vec<Cell> = cells[lines[l].clone()].to_vec();
                        if rev {
                            line.reverse();
                        }
                        let key = stream_offset + l as u64 + if rev { n_lines } else { 0 };
                        let mut out = run_carried(config, &line, key, r, &progress)?;
                        if rev {
                            out.reverse();
                        }
                        Ok(out)
                    })
                    .collect::<Result<Vec<_>, SweepError>>()
            })??;
            let mut forward = vec![Vec::with_capacity(reps); cells.len()];
            let mut backward = vec![Vec::with_capacity(reps); cells.len()];
            for (&(l, rev, _), run) in jobs.iter().zip(&runs) {
                for (k, o) in lines[l].clone().zip(run) {
                    if rev { &mut backward[k] } else { &mut forward[k] }.push(*o);
                }
            }
            let flags = forward
                .iter()
                .zip(&backward)
                .map(|(f, b)| {
                    let (f, b) = (stats(f), stats(b));
                    let se = (f.std * f.std / f.n as f64 + b.std * b.std / b.n as f64).sqrt();
                    (f.mean - b.mean).abs() > DEFAULT_SIGNIFICANCE * se.max(f64::MIN_POSITIVE)
                })
                .collect();
            (forward, flags)
        }
    };

    let rows = cells
        .iter()
        .zip(&forward)
        .zip(t_pred.iter().zip(&hysteresis))
        .map(|((cell, reps), (&t_pred_mk, &hysteresis))| {
            let s = stats(reps);
            SweepRow {
                delta_mhz: cell.delta_mhz,
                alpha: cell.alpha,
                dx_mean_um: s.mean,
                dx_std_um: s.std,
                t_pred_mk,
                t_kin_mk: s.t_kin,
                n_reps: s.n,
                hysteresis,
            }
        })
        .collect();
    Ok(SweepResult { config_hash: config_hash(config), seed: config.seed, rows })
}

/// Full (α, Δ) grid, α outer. Carried sweeps chain along Δ at each α.
pub fn sweep_grid(
    config: &ExperimentConfig,
    alphas: &[f64],
    deltas_mhz: &[f64],
    options: &SweepOptions,
    label: &str,
) -> Result<SweepResult, SweepError> {
    let cells: Vec<Cell> =
        alphas.iter().flat_map(|&alpha| deltas_mhz.iter().map(move |&delta_mhz| Cell { delta_mhz, alpha })).collect();
    let nd = deltas_mhz.len();
    let lines: Vec<_> = (0..alphas.len()).map(|i| i * nd..(i + 1) * nd).collect();
    sweep_cells(config, &cells, &lines, options, 0, label)
}

/// Δ sweep at the config's α.
pub fn sweep_detuning(
    config: &ExperimentConfig,
    deltas_mhz: &[f64],
    options: &SweepOptions,
) -> Result<SweepResult, SweepError> {
    sweep_grid(config, &[config.trap.alpha], deltas_mhz, options, "sweep-detuning")
}

/// α sweep at fixed Δ. Carried sweeps chain along α.
pub fn sweep_alpha(
    config: &ExperimentConfig,
    alphas: &[f64],
    delta_mhz: f64,
    options: &SweepOptions,
    stream_offset: u64,
) -> Result<SweepResult, SweepError> {
    let cells: Vec<Cell> = alphas.iter().map(|&alpha| Cell { delta_mhz, alpha }).collect();
    let line = 0..cells.len();
    sweep_cells(config, &cells, std::slice::from_ref(&line), options, stream_offset, "sweep-alpha")
}

fn sorted_curve(axis: &[f64], rows: &[SweepRow]) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut idx: Vec<usize> = (0..axis.len()).collect();
    idx.sort_by(|&a, &b| axis[a].total_cmp(&axis[b]));
    let pick = |f: &dyn Fn(&SweepRow) -> f64| idx.iter().map(|&i| f(&rows[i])).collect::<Vec<_>>();
    (
        idx.iter().map(|&i| axis[i]).collect(),
        pick(&|r| r.dx_mean_um),
        pick(&|r| r.dx_std_um / (r.n_reps as f64).sqrt()),
        pick(&|r| r.t_kin_mk),
    )
}

fn interpolate(axis: &[f64], values: &[f64], x: f64) -> f64 {
    let k = axis.partition_point(|&a| a <= x).clamp(1, axis.len() - 1);
    let (x0, x1) = (axis[k - 1], axis[k]);
    let t = if x1 > x0 { ((x - x0) / (x1 - x0)).clamp(0.0, 1.0) } else { 0.0 };
    values[k - 1] + t * (values[k] - values[k - 1])
}

/// Edges of the zigzag window along Δ at one α.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetuningEdges {
    /// Where dx rises (first rising half-maximum crossing).
    pub rise: Option<TransitionEstimate>,
    /// Where it falls back (last falling crossing).
    pub fall: Option<TransitionEstimate>,
    /// Kinetic temperature interpolated at the rising edge, mK.
    pub t_rise_mk: Option<f64>,
    /// Kinetic temperature interpolated at the falling edge, mK.
    pub t_fall_mk: Option<f64>,
}

/// Window edges of a Δ line; standard errors are std/√n.
pub fn detuning_edges(rows: &[SweepRow]) -> Result<DetuningEdges, ObservableError> {
    let axis: Vec<f64> = rows.iter().map(|r| r.delta_mhz).collect();
    let (axis, means, errors, temps) = sorted_curve(&axis, rows);
    let crossings = detect_transitions(&axis, &means, &errors, DEFAULT_SIGNIFICANCE)?;
    let (rise, fall) = window_edges(&crossings);
    let at = |e: Option<TransitionEstimate>| e.map(|e| interpolate(&axis, &temps, e.critical_value));
    Ok(DetuningEdges { rise, fall, t_rise_mk: at(rise), t_fall_mk: at(fall) })
}

/// Critical anisotropy of an α line: the first falling crossing of dx.
pub fn alpha_critical(rows: &[SweepRow]) -> Result<TransitionEstimate, ObservableError> {
    let axis: Vec<f64> = rows.iter().map(|r| r.alpha).collect();
    let (axis, means, errors, _) = sorted_curve(&axis, rows);
    let crossings = detect_transitions(&axis, &means, &errors, DEFAULT_SIGNIFICANCE)?;
    crossings
        .iter()
        .find(|c| c.direction == EdgeDirection::Falling)
        .or(crossings.first())
        .copied()
        .ok_or(ObservableError::NoTransition { range: 0.0, threshold: 0.0 })
}

/// Per-α critical detunings and temperatures of a phase diagram.
///
/// A line only has a zigzag window when its smoothed dx reaches half the
/// zero-temperature value; otherwise the half-max edges would track noise
/// and the row carries no edges or T_c.
pub fn locus(result: &SweepResult, config: &ExperimentConfig) -> Result<Vec<LocusRow>, SweepError> {
    result
        .alphas()
        .into_iter()
        .map(|alpha| {
            let rows = result.row_at_alpha(alpha);
            let dx_zero_um = zero_temperature_dx_um(config, alpha)?;
            let means: Vec<f64> = rows.iter().map(|r| r.dx_mean_um).collect();
            let dx_peak_um = smooth(&means).into_iter().fold(0.0, f64::max);
            let open = dx_zero_um > 0.0 && dx_peak_um >= 0.5 * dx_zero_um;
            let e = if open { detuning_edges(&rows).ok() } else { None };
            let t: Vec<f64> = e.iter().flat_map(|e| [e.t_rise_mk, e.t_fall_mk]).flatten().collect();
            Ok(LocusRow {
                alpha,
                dx_zero_um,
                dx_peak_um,
                delta_rise_mhz: e.and_then(|e| e.rise).map(|t| t.critical_value),
                delta_fall_mhz: e.and_then(|e| e.fall).map(|t| t.critical_value),
                t_c_rise_mk: e.and_then(|e| e.t_rise_mk),
                t_c_fall_mk: e.and_then(|e| e.t_fall_mk),
                t_c_mk: (!t.is_empty()).then(|| t.iter().sum::<f64>() / t.len() as f64),
            })
        })
        .collect()
}

/// dx of the static crystal at `alpha`, µm; zero on the linear side.
pub fn zero_temperature_dx_um(config: &ExperimentConfig, alpha: f64) -> Result<f64, SweepError> {
    let trap = config.trap.with_alpha(alpha);
    let eq = equilibrium_positions(config.n_ions, &trap, &config.species, SeedPolicy::ZIGZAG)
        .map_err(|e| SweepError::Statics { alpha, source: e })?;
    Ok(order_parameter_dx(&eq.positions) * 1e6)
}

/// Line through the α rows that have a critical temperature.
pub fn critical_temperature_fit(locus: &[LocusRow]) -> Result<LinearFit, ObservableError> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = locus.iter().filter_map(|r| Some((r.alpha, r.t_c_mk?))).unzip();
    linear_fit(&xs, &ys)
}

/// Simulated E_e ↦ α_c map at fixed Δ, one α sweep per bath intensity.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    /// The fitted map.
    pub map: CalibrationMap,
    /// The α sweeps behind it, one per E_e.
    pub sweeps: Vec<SweepResult>,
}

/// Build the calibration map. Stream keys of the k-th bath intensity start
/// at `k · alphas.len()`, so no two sweeps share randomness.
pub fn calibrate_bath(
    config: &ExperimentConfig,
    delta_mhz: f64,
    e_e_mu0: &[f64],
    alphas: &[f64],
    options: &SweepOptions,
) -> Result<Calibration, SweepError> {
    let mut alpha_c = Vec::with_capacity(e_e_mu0.len());
    let mut alpha_err = Vec::with_capacity(e_e_mu0.len());
    let mut sweeps = Vec::with_capacity(e_e_mu0.len());
    for (k, &e) in e_e_mu0.iter().enumerate() {
        let mut cfg = config.clone();
        cfg.bath = BathParams::from_mu0(e);
        if options.progress {
            eprintln!("calibrate: E_e = {e} mu0");
        }
        let sweep = sweep_alpha(&cfg, alphas, delta_mhz, options, (k * alphas.len()) as u64)?;
        let est = alpha_critical(&sweep.rows)?;
        alpha_c.push(est.critical_value);
        alpha_err.push(est.uncertainty);
        sweeps.push(sweep);
    }
    Ok(Calibration { map: CalibrationMap::new(e_e_mu0.to_vec(), alpha_c, alpha_err)?, sweeps })
}
