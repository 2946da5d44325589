//! Command-line front end. Progress goes to stderr; stdout carries
//! `key = value` summaries only.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use zigzag_core::constants::BETA0;
use zigzag_core::cooling::{default_rabi_table, detuning_window, rabi_from_window, CoolingCache, FrequencyRange};
use zigzag_core::dynamics::{run_trajectory_with, Segment, SweepMode};
use zigzag_core::observables::{kinetic_temperature, render_summary, summary_dx, Axes};
use zigzag_core::rng::stream;
use zigzag_core::statics::{equilibrium_positions, hessian, length_scale, normal_modes, SeedPolicy};
use zigzag_core::units::{angular_to_mhz, mhz_to_angular};
use zigzag_core::ExperimentConfig;

use crate::config_file::{read_config, ConfigError};
use crate::image::{encode_pgm, fitted_optics, row_count, sidecar, sidecar_path};
use crate::sweep::{
    alpha_critical, calibrate_bath, critical_temperature_fit, detuning_edges, grid, locus, sweep_alpha, sweep_detuning,
    sweep_grid, SweepError, SweepOptions,
};
use crate::tables::{to_csv, write_file, CoolingRow, FitRow, ModeRow, TableError, TrajectoryRow};

/// Repetitions used by `--quick`.
pub const QUICK_REPETITIONS: usize = 10;

/// Process exit codes.
pub mod exit {
    /// Success.
    pub const OK: i32 = 0;
    /// Unexpected internal failure.
    pub const FAILURE: i32 = 1;
    /// Bad usage or config.
    pub const USAGE: i32 = 2;
    /// A trajectory went unstable.
    pub const UNSTABLE: i32 = 3;
    /// Measured α_c outside the calibrated range.
    pub const CALIBRATION_RANGE: i32 = 4;
}

/// Simulate the laser-driven linear/zigzag transition of a trapped-ion chain.
#[derive(Debug, Parser)]
#[command(name = "zigzag", version)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Fresh,
    Carried,
}

#[derive(Debug, Args)]
struct Common {
    /// Config file (`key = value`); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Repetitions per grid cell (overrides the config).
    #[arg(long)]
    reps: Option<usize>,
    /// Base seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Use 10 repetitions unless --reps is given.
    #[arg(long)]
    quick: bool,
    /// Restart every cell or carry the crystal from cell to cell.
    #[arg(long, value_enum, default_value_t = Mode::Fresh)]
    mode: Mode,
    /// Worker threads (else ZIGZAG_WORKERS, else all cores).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// dx and temperatures along a detuning sweep.
    SweepDetuning {
        #[command(flatten)]
        common: Common,
        /// CSV output.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = -120.0, allow_hyphen_values = true)]
        from: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        to: f64,
        #[arg(long, default_value_t = 5.0, allow_hyphen_values = true)]
        step: f64,
        /// Anisotropy (overrides the config).
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// dx along an anisotropy sweep at fixed detuning.
    SweepAlpha {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3.15)]
        from: f64,
        #[arg(long, default_value_t = 3.45)]
        to: f64,
        #[arg(long, default_value_t = 0.01, allow_hyphen_values = true)]
        step: f64,
        /// Cooling detuning, MHz.
        #[arg(long, default_value_t = -30.0, allow_hyphen_values = true)]
        delta: f64,
    },
    /// Full (Δ, α) grid plus the critical-detuning locus and T_c(α) fit.
    PhaseDiagram {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        /// Locus CSV (default: `<out>_locus.csv`).
        #[arg(long)]
        locus: Option<PathBuf>,
        /// T_c(α) fit CSV (default: `<out>_fit.csv`).
        #[arg(long)]
        fit: Option<PathBuf>,
        #[arg(long, default_value_t = -120.0, allow_hyphen_values = true)]
        delta_from: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        delta_to: f64,
        #[arg(long, default_value_t = 5.0, allow_hyphen_values = true)]
        delta_step: f64,
        #[arg(long, default_value_t = 3.15)]
        alpha_from: f64,
        #[arg(long, default_value_t = 3.45)]
        alpha_to: f64,
        #[arg(long, default_value_t = 0.05, allow_hyphen_values = true)]
        alpha_step: f64,
    },
    /// Infer E_e from a measured critical anisotropy.
    Calibrate {
        #[command(flatten)]
        common: Common,
        /// Measured α_c.
        #[arg(long)]
        alpha_c: f64,
        /// Its one-sigma uncertainty.
        #[arg(long, default_value_t = 0.0)]
        alpha_c_err: f64,
        /// Cooling detuning, MHz.
        #[arg(long, default_value_t = -30.0, allow_hyphen_values = true)]
        delta: f64,
        /// Bath intensities to simulate, in μ0.
        #[arg(long, value_delimiter = ',', default_values_t = [7.0, 10.0, 13.0, 16.0, 19.0])]
        e_e: Vec<f64>,
        #[arg(long, default_value_t = 3.15)]
        alpha_from: f64,
        #[arg(long, default_value_t = 3.45)]
        alpha_to: f64,
        #[arg(long, default_value_t = 0.01, allow_hyphen_values = true)]
        alpha_step: f64,
        /// Fit CSV of the simulated line α_c(E_e/μ0).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Synthetic camera frame of one trajectory.
    Render {
        #[command(flatten)]
        common: Common,
        /// Image output (P5 graymap); the sidecar goes next to it as `.txt`.
        #[arg(long)]
        out: PathBuf,
        /// Cooling detuning, MHz.
        #[arg(long, default_value_t = -40.0, allow_hyphen_values = true)]
        delta: f64,
        /// Object-space pixel pitch, µm (default: fit the crystal to the frame).
        #[arg(long)]
        pitch_um: Option<f64>,
        /// Largest frame side, pixels.
        #[arg(long, default_value_t = 256)]
        size: usize,
        /// Expected counts per ion.
        #[arg(long, default_value_t = 1000.0)]
        photons: f64,
    },
    /// Friction and predicted temperature against detuning.
    CoolingCurves {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = -150.0, allow_hyphen_values = true)]
        from: f64,
        #[arg(long, default_value_t = 30.0, allow_hyphen_values = true)]
        to: f64,
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        step: f64,
    },
    /// Normal-mode frequencies of the zero-temperature crystal against α.
    Modes {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2.5)]
        from: f64,
        #[arg(long, default_value_t = 4.0)]
        to: f64,
        #[arg(long, default_value_t = 0.05, allow_hyphen_values = true)]
        step: f64,
    },
    /// Positions of every ion at every k-th sample of one trajectory.
    Trajectory {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = -40.0, allow_hyphen_values = true)]
        delta: f64,
        /// Keep one sample in this many.
        #[arg(long, default_value_t = 100)]
        every: u64,
    },
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    /// Process exit code.
    pub code: i32,
    /// Message for stderr.
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: exit::USAGE, message: message.into() }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Self::usage(e.to_string())
    }
}

impl From<SweepError> for Failure {
    fn from(e: SweepError) -> Self {
        let code = match e {
            SweepError::EmptyGrid(_) | SweepError::Workers(_) => exit::USAGE,
            SweepError::Unstable { .. } | SweepError::Cooling { .. } => exit::UNSTABLE,
            SweepError::Observable(_) | SweepError::Statics { .. } => exit::FAILURE,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<TableError> for Failure {
    fn from(e: TableError) -> Self {
        let code = if matches!(e, TableError::Io { .. }) { exit::USAGE } else { exit::FAILURE };
        Self { code, message: e.to_string() }
    }
}

fn load(common: &Common) -> Result<(ExperimentConfig, SweepOptions), Failure> {
    let mut cfg = match &common.config {
        Some(p) => read_config(p)?,
        None => zigzag_core::config::validate(&ExperimentConfig::default()).map_err(ConfigError::from)?,
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(r) = common.reps.or(common.quick.then_some(QUICK_REPETITIONS)) {
        if r == 0 {
            return Err(Failure::usage("--reps must be at least 1"));
        }
        cfg.repetitions = r;
    }
    let mode = match common.mode {
        Mode::Fresh => SweepMode::Fresh,
        Mode::Carried => SweepMode::Carried,
    };
    let options = SweepOptions { mode, repetitions: cfg.repetitions, workers: common.workers, progress: true };
    Ok((cfg, options))
}

fn revalidate(cfg: &ExperimentConfig) -> Result<ExperimentConfig, Failure> {
    zigzag_core::config::validate(cfg).map_err(|e| Failure::usage(format!("invalid config: {e}")))
}

/// Fail early when the directory an output goes into does not exist.
fn check_output(path: &Path) -> Result<(), Failure> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() && !dir.is_dir() => {
            Err(Failure::usage(format!("output directory {} does not exist", dir.display())))
        }
        _ => Ok(()),
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map_or_else(|| "out".into(), |s| s.to_string_lossy().into_owned());
    path.with_file_name(format!("{stem}_{suffix}.csv"))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".into(), |v| format!("{v:.4}"))
}

/// Parse arguments and run; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::USAGE } else { exit::OK };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => exit::OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::SweepDetuning { common, out, from, to, step, alpha } => {
            check_output(&out)?;
            let (mut cfg, opts) = load(&common)?;
            if let Some(a) = alpha {
                cfg.trap.alpha = a;
                cfg = revalidate(&cfg)?;
            }
            let deltas = grid(from, to, step)?;
            let res = sweep_detuning(&cfg, &deltas, &opts)?;
            write_file(&out, &res.to_csv()?)?;
            println!("rows = {}", res.rows.len());
            println!("config_hash = {}", res.config_hash);
            match detuning_edges(&res.rows) {
                Ok(e) => {
                    println!("rising_edge_mhz = {}", fmt_opt(e.rise.map(|t| t.critical_value)));
                    println!("rising_edge_err_mhz = {}", fmt_opt(e.rise.map(|t| t.uncertainty)));
                    println!("falling_edge_mhz = {}", fmt_opt(e.fall.map(|t| t.critical_value)));
                    println!("falling_edge_err_mhz = {}", fmt_opt(e.fall.map(|t| t.uncertainty)));
                    println!("t_c_rise_mk = {}", fmt_opt(e.t_rise_mk));
                    println!("t_c_fall_mk = {}", fmt_opt(e.t_fall_mk));
                }
                Err(e) => println!("transition = none ({e})"),
            }
        }
        Command::SweepAlpha { common, out, from, to, step, delta } => {
            check_output(&out)?;
            let (cfg, opts) = load(&common)?;
            let alphas = grid(from, to, step)?;
            let res = sweep_alpha(&cfg, &alphas, delta, &opts, 0)?;
            write_file(&out, &res.to_csv()?)?;
            println!("rows = {}", res.rows.len());
            println!("config_hash = {}", res.config_hash);
            match alpha_critical(&res.rows) {
                Ok(t) => {
                    println!("alpha_c = {:.5}", t.critical_value);
                    println!("alpha_c_err = {:.5}", t.uncertainty);
                }
                Err(e) => println!("transition = none ({e})"),
            }
        }
        Command::PhaseDiagram {
            common,
            out,
            locus: locus_path,
            fit: fit_path,
            delta_from,
            delta_to,
            delta_step,
            alpha_from,
            alpha_to,
            alpha_step,
        } => {
            let locus_path = locus_path.unwrap_or_else(|| sibling(&out, "locus"));
            let fit_path = fit_path.unwrap_or_else(|| sibling(&out, "fit"));
            for p in [&out, &locus_path, &fit_path] {
                check_output(p)?;
            }
            let (cfg, opts) = load(&common)?;
            let deltas = grid(delta_from, delta_to, delta_step)?;
            let alphas = grid(alpha_from, alpha_to, alpha_step)?;
            let res = sweep_grid(&cfg, &alphas, &deltas, &opts, "phase-diagram")?;
            write_file(&out, &res.to_csv()?)?;
            let rows = locus(&res, &cfg)?;
            let meta = [("config_hash", res.config_hash.as_str())];
            write_file(&locus_path, &to_csv(&meta, &rows)?)?;
            println!("rows = {}", res.rows.len());
            println!("config_hash = {}", res.config_hash);
            let with_tc = rows.iter().filter(|r| r.t_c_mk.is_some()).count();
            println!("alphas_with_t_c = {with_tc}/{}", rows.len());
            match critical_temperature_fit(&rows) {
                Ok(f) => {
                    let fit = FitRow { slope: f.slope, intercept: f.intercept, r2: f.r2, n: f.n };
                    write_file(&fit_path, &to_csv(&meta, &[fit])?)?;
                    println!("t_c_slope_mk_per_alpha = {:.3}", f.slope);
                    println!("t_c_intercept_mk = {:.3}", f.intercept);
                    println!("t_c_r2 = {:.4}", f.r2);
                }
                Err(e) => println!("t_c_fit = none ({e})"),
            }
        }
        Command::Calibrate { common, alpha_c, alpha_c_err, delta, e_e, alpha_from, alpha_to, alpha_step, out } => {
            if let Some(p) = &out {
                check_output(p)?;
            }
            let (cfg, opts) = load(&common)?;
            let alphas = grid(alpha_from, alpha_to, alpha_step)?;
            let (lo, hi) = (alphas[0].min(alphas[alphas.len() - 1]), alphas[0].max(alphas[alphas.len() - 1]));
            if !(alpha_c >= lo && alpha_c <= hi) {
                return Err(Failure {
                    code: exit::CALIBRATION_RANGE,
                    message: format!("alpha_c = {alpha_c} outside the simulated alpha range [{lo}, {hi}]"),
                });
            }
            if e_e.len() < 2 {
                return Err(Failure::usage("need at least two --e-e values"));
            }
            let cal = calibrate_bath(&cfg, delta, &e_e, &alphas, &opts)?;
            let fit = cal.map.fit;
            let (a, b) = cal.map.inverse_line();
            for (e, (ac, err)) in cal.map.e_e_mu0.iter().zip(cal.map.alpha_c.iter().zip(&cal.map.alpha_c_err)) {
                println!("map e_e_mu0 = {e} alpha_c = {ac:.5} +- {err:.5}");
            }
            println!("line = E_e/mu0 = {a:.3} * alpha_c + {b:.3}");
            println!("line_r2 = {:.5}", fit.r2);
            println!("decreasing = {}", cal.map.is_decreasing());
            if let Some(p) = &out {
                let row = FitRow { slope: fit.slope, intercept: fit.intercept, r2: fit.r2, n: fit.n };
                write_file(p, &to_csv(&[("x", "e_e_over_mu0"), ("y", "alpha_c")], &[row])?)?;
            }
            let est = cal
                .map
                .invert(alpha_c, alpha_c_err)
                .map_err(|e| Failure { code: exit::CALIBRATION_RANGE, message: e.to_string() })?;
            println!("e_e_mu0 = {:.4}", est.e_e_mu0);
            println!("e_e_err_mu0 = {:.4}", est.uncertainty_mu0);
        }
        Command::Render { common, out, delta, pitch_um, size, photons } => {
            check_output(&out)?;
            let (cfg, _) = load(&common)?;
            let lasers = cfg.lasers.with_delta_397(mhz_to_angular(delta));
            let mut rng = stream(cfg.seed, 0, 0);
            let summary = run_trajectory_with(&cfg, &[Segment { lasers, steps: cfg.n_steps }], &mut rng, |_| {})
                .map_err(|e| Failure { code: exit::UNSTABLE, message: e.to_string() })?;
            let mut optics = fitted_optics(&summary.mean_positions, photons, size.max(16));
            if let Some(p) = pitch_um {
                if !(p > 0.0) {
                    return Err(Failure::usage("--pitch-um must be positive"));
                }
                optics.pixel_pitch = p * 1e-6;
                optics.psf_sigma = optics.pixel_pitch;
            }
            let image = render_summary(&summary, &optics)
                .map_err(|e| Failure { code: exit::FAILURE, message: e.to_string() })?;
            write_file(&out, &encode_pgm(&image))?;
            write_file(&sidecar_path(&out), sidecar(&image).as_bytes())?;
            let xs: Vec<f64> = summary.mean_positions.iter().map(|p| p.x).collect();
            let rows = row_count(&xs, 0.1 * length_scale(&cfg.trap, &cfg.species));
            println!("dx_um = {:.4}", summary_dx(&summary) * 1e6);
            println!("rows = {rows}");
            if let Ok(t) = kinetic_temperature(&summary, cfg.species.mass, Axes::XZ) {
                println!("t_kin_mk = {:.3}", t * 1e3);
            }
            println!("pixel_pitch_um = {:.5}", image.pixel_pitch * 1e6);
        }
        Command::CoolingCurves { common, out, from, to, step } => {
            check_output(&out)?;
            let (cfg, _) = load(&common)?;
            let deltas = grid(from, to, step)?;
            let mut cache = CoolingCache::new(cfg.species, cfg.bath);
            let mut rows = Vec::with_capacity(deltas.len());
            for &d in &deltas {
                let r = cache
                    .response(&cfg.lasers.with_delta_397(mhz_to_angular(d)))
                    .map_err(|e| Failure { code: exit::UNSTABLE, message: format!("delta = {d} MHz: {e}") })?;
                let tx = r.axis_temperature(0, cfg.species.mass, &cfg.bath);
                let tz = r.axis_temperature(2, cfg.species.mass, &cfg.bath);
                rows.push(CoolingRow {
                    delta_mhz: d,
                    beta_over_beta0: r.beta_beam / BETA0,
                    t_pred_mk: tx.zip(tz).map(|(a, b)| 0.5 * (a + b) * 1e3),
                });
            }
            let hash = crate::config_file::config_hash(&cfg);
            write_file(&out, &to_csv(&[("config_hash", hash.as_str())], &rows)?)?;
            if let Some(peak) = rows.iter().max_by(|a, b| a.beta_over_beta0.total_cmp(&b.beta_over_beta0)) {
                println!("beta_peak_mhz = {}", peak.delta_mhz);
                println!("beta_peak_over_beta0 = {:.4}", peak.beta_over_beta0);
            }
            let scan = FrequencyRange::from_mhz(from.min(to), from.max(to), step.abs());
            match detuning_window(&cfg.species, &cfg.lasers, &scan) {
                Ok(w) => {
                    println!("delta_w_mhz = {:.3}", w / 1e6);
                    if let Ok(est) = rabi_from_window(w, &cfg.species, &cfg.lasers, &scan, &default_rabi_table()) {
                        println!("rabi_from_window_mhz = {:.2}", angular_to_mhz(est.omega_rabi));
                    }
                }
                Err(e) => println!("delta_w_mhz = none ({e})"),
            }
        }
        Command::Modes { common, out, from, to, step } => {
            check_output(&out)?;
            let (cfg, _) = load(&common)?;
            let mut rows = Vec::new();
            for alpha in grid(from, to, step)? {
                let trap = cfg.trap.with_alpha(alpha);
                let fail = |e: zigzag_core::statics::StaticsError| Failure {
                    code: exit::FAILURE,
                    message: format!("alpha = {alpha}: {e}"),
                };
                let eq = equilibrium_positions(cfg.n_ions, &trap, &cfg.species, SeedPolicy::ZIGZAG).map_err(fail)?;
                let modes = normal_modes(&hessian(&eq.positions, &trap, &cfg.species).map_err(fail)?, &cfg.species)
                    .map_err(fail)?;
                rows.extend(modes.signed_frequencies().into_iter().enumerate().map(|(k, w)| ModeRow {
                    alpha,
                    mode_index: k,
                    freq_mhz: angular_to_mhz(w),
                }));
            }
            let hash = crate::config_file::config_hash(&cfg);
            write_file(&out, &to_csv(&[("config_hash", hash.as_str())], &rows)?)?;
            println!("rows = {}", rows.len());
        }
        Command::Trajectory { common, out, delta, every } => {
            check_output(&out)?;
            let (cfg, _) = load(&common)?;
            let lasers = cfg.lasers.with_delta_397(mhz_to_angular(delta));
            let mut rng = stream(cfg.seed, 0, 0);
            let mut rows = Vec::new();
            let mut k = 0u64;
            let every = every.max(1);
            run_trajectory_with(&cfg, &[Segment { lasers, steps: cfg.n_steps }], &mut rng, |s| {
                if k.is_multiple_of(every) {
                    rows.extend(s.positions.iter().enumerate().map(|(i, p)| TrajectoryRow {
                        time_s: s.time,
                        ion_index: i,
                        x_um: p.x * 1e6,
                        y_um: p.y * 1e6,
                        z_um: p.z * 1e6,
                    }));
                }
                k += 1;
            })
            .map_err(|e| Failure { code: exit::UNSTABLE, message: e.to_string() })?;
            let hash = crate::config_file::config_hash(&cfg);
            let seed = cfg.seed.to_string();
            write_file(&out, &to_csv(&[("config_hash", hash.as_str()), ("seed", seed.as_str())], &rows)?)?;
            println!("rows = {}", rows.len());
        }
    }
    Ok(())
}
