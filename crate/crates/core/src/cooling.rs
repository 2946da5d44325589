//! Steady-state photon scattering of the S–P–D Λ system and the friction,
//! momentum diffusion and temperature it implies.
//!
//! The optical Bloch equations are solved as a linear system: the 9×9
//! Liouvillian (in units of Γ₁) with one row replaced by the trace condition.

use alloc::collections::BTreeMap;
use core::f64::consts::PI;

use nalgebra::{Complex, SMatrix, SVector};
use thiserror::Error;

use crate::config::{BathParams, LaserParams};
use crate::constants::{HBAR, K_B};
use crate::species::IonSpecies;
use crate::units::mhz_to_angular;
use crate::Vec3;

type C64 = Complex<f64>;
type Liouvillian = SMatrix<C64, 9, 9>;

/// Failures of the cooling model.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoolingError {
    /// The steady state is not unique (for example no light at all).
    #[error("optical Bloch steady state is not unique (singular Liouvillian)")]
    Singular,
    /// Temperature requested on the heating side of resonance.
    #[error("friction coefficient {beta:e} N·s/m is not positive; temperature undefined")]
    NonPositiveFriction {
        /// The offending β, N·s/m.
        beta: f64,
    },
    /// The detuning range misses the friction maximum or its zero.
    #[error("detuning window not bracketed by the sweep range")]
    WindowNotBracketed,
    /// A zero or negative window width was supplied.
    #[error("detuning window must be positive")]
    DegenerateWindow,
    /// The requested window lies outside the tabulated Rabi range.
    #[error("window {delta_w_hz:e} Hz outside the tabulated range [{min_hz:e}, {max_hz:e}] Hz")]
    OutOfTable {
        /// Requested window, Hz.
        delta_w_hz: f64,
        /// Smallest tabulated window, Hz.
        min_hz: f64,
        /// Largest tabulated window, Hz.
        max_hz: f64,
    },
    /// A range with non-positive step or inverted bounds.
    #[error("invalid scan range")]
    InvalidRange,
}

/// Steady-state density matrix of the three-level system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaSteadyState {
    /// Population of 4S₁/₂.
    pub pop_s: f64,
    /// Population of 4P₁/₂.
    pub pop_p: f64,
    /// Population of 3D₃/₂.
    pub pop_d: f64,
    /// ρ_SP.
    pub coherence_sp: C64,
    /// ρ_SD, the Raman coherence.
    pub coherence_sd: C64,
    /// ρ_PD.
    pub coherence_pd: C64,
}

/// Friction, diffusion and temperature at one laser setting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoolingResponse {
    /// Friction along x, N·s/m.
    pub beta_x: f64,
    /// Friction along y, N·s/m.
    pub beta_y: f64,
    /// Friction along z, N·s/m.
    pub beta_z: f64,
    /// Friction along the cooling beam, N·s/m.
    pub beta_beam: f64,
    /// Friction along the repump beam, N·s/m.
    pub beta_repump: f64,
    /// Photons scattered per second at rest.
    pub scatter_rate: f64,
    /// Momentum diffusion per axis (x, y, z) in the `⟨F F⟩ = 2D δ(t)` convention, N²·s.
    pub d_photon: Vec3,
    /// Predicted temperature along z, K; `None` on the heating side.
    pub t_pred: Option<f64>,
    /// Populations at rest.
    pub steady: LambdaSteadyState,
}

impl CoolingResponse {
    /// Friction per axis (x, y, z), N·s/m.
    pub fn friction(&self) -> Vec3 {
        Vec3::new(self.beta_x, self.beta_y, self.beta_z)
    }

    /// Stationary temperature along `axis` (0 = x, 1 = y, 2 = z) for an ion
    /// of mass `mass` in `bath`; `None` if that axis is not cooled.
    pub fn axis_temperature(&self, axis: usize, mass: f64, bath: &BathParams) -> Option<f64> {
        let beta = self.friction()[axis];
        (beta > 0.0).then(|| (self.d_photon[axis] + 0.5 * mass * bath.e_e) / (K_B * beta))
    }
}

/// Unit propagation vectors of the cooling and repump beams.
///
/// The cooling beam lies in the xz plane at `theta` from z. The repump is
/// perpendicular to it within the plane and tilted by `phi_y` towards y, so
/// motion along the cooling beam Doppler-shifts only Δ.
pub fn beam_directions(lasers: &LaserParams) -> (Vec3, Vec3) {
    let (st, ct) = libm::sincos(lasers.theta);
    let (sp, cp) = libm::sincos(lasers.phi_y);
    (Vec3::new(st, 0.0, ct), Vec3::new(cp * ct, sp, -cp * st))
}

/// Steady state for an ion moving with `velocity` (m/s).
pub fn steady_state(
    species: &IonSpecies,
    lasers: &LaserParams,
    velocity: &Vec3,
) -> Result<LambdaSteadyState, CoolingError> {
    let (u1, u2) = beam_directions(lasers);
    solve_bloch(
        species,
        lasers,
        lasers.delta_397 - species.k1 * u1.dot(velocity),
        lasers.delta_866 - species.k2 * u2.dot(velocity),
    )
}

const S: usize = 0;
const P: usize = 1;
const D: usize = 2;

fn idx(i: usize, j: usize) -> usize {
    3 * i + j
}

fn solve_bloch(
    species: &IonSpecies,
    lasers: &LaserParams,
    delta: f64,
    delta_r: f64,
) -> Result<LambdaSteadyState, CoolingError> {
    let g = species.gamma1;
    let mut h = [[C64::new(0.0, 0.0); 3]; 3];
    h[S][S] = C64::new(delta / g, 0.0);
    h[D][D] = C64::new(delta_r / g, 0.0);
    h[S][P] = C64::new(0.5 * lasers.omega_rabi / g, 0.0);
    h[P][S] = h[S][P];
    h[D][P] = C64::new(0.5 * lasers.omega_rabi_repump / g, 0.0);
    h[P][D] = h[D][P];

    let eps = species.leak_fraction;
    let mut jumps = [[[C64::new(0.0, 0.0); 3]; 3]; 2];
    jumps[0][S][P] = C64::new(libm::sqrt(1.0 - eps), 0.0);
    jumps[1][D][P] = C64::new(libm::sqrt(eps), 0.0);

    let mi = C64::new(0.0, -1.0);
    let mut l = Liouvillian::zeros();
    for i in 0..3 {
        for j in 0..3 {
            let row = idx(i, j);
            for k in 0..3 {
                l[(row, idx(k, j))] += mi * h[i][k];
                l[(row, idx(i, k))] -= mi * h[k][j];
            }
        }
    }
    for c in &jumps {
        let mut cdc = [[C64::new(0.0, 0.0); 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                for row in c.iter() {
                    cdc[a][b] += row[a].conj() * row[b];
                }
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                let row = idx(i, j);
                for k in 0..3 {
                    for m in 0..3 {
                        l[(row, idx(k, m))] += c[i][k] * c[j][m].conj();
                    }
                    l[(row, idx(k, j))] -= 0.5 * cdc[i][k];
                    l[(row, idx(i, k))] -= 0.5 * cdc[k][j];
                }
            }
        }
    }
    for col in 0..9 {
        l[(0, col)] = C64::new(0.0, 0.0);
    }
    for a in 0..3 {
        l[(0, idx(a, a))] = C64::new(1.0, 0.0);
    }
    let mut rhs = SVector::<C64, 9>::zeros();
    rhs[0] = C64::new(1.0, 0.0);

    let lu = l.lu();
    let u = lu.u();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for k in 0..9 {
        let p = libm::hypot(u[(k, k)].re, u[(k, k)].im);
        lo = lo.min(p);
        hi = hi.max(p);
    }
    if !(lo > 1e-12 * hi) {
        return Err(CoolingError::Singular);
    }
    let rho = lu.solve(&rhs).ok_or(CoolingError::Singular)?;
    let pop = |a: usize| {
        let v = rho[idx(a, a)].re;
        if v < 0.0 && v > -1e-12 {
            0.0
        } else {
            v
        }
    };
    Ok(LambdaSteadyState {
        pop_s: pop(S),
        pop_p: pop(P),
        pop_d: pop(D),
        coherence_sp: rho[idx(S, P)],
        coherence_sd: rho[idx(S, D)],
        coherence_pd: rho[idx(P, D)],
    })
}

/// Velocity step of the finite-difference derivative, m/s.
pub fn default_velocity_step(species: &IonSpecies) -> f64 {
    0.01 * species.gamma1 / species.k1
}

/// Friction along the cooling beam from a central difference with velocity
/// step `h` (m/s).
pub fn beam_friction(species: &IonSpecies, lasers: &LaserParams, h: f64) -> Result<f64, CoolingError> {
    let force = |v: f64| -> Result<f64, CoolingError> {
        let s = solve_bloch(species, lasers, lasers.delta_397 - species.k1 * v, lasers.delta_866)?;
        Ok(HBAR * species.k1 * species.gamma1 * s.pop_p)
    };
    Ok(-(force(h)? - force(-h)?) / (2.0 * h))
}

/// Friction along the repump beam, from the D→P absorption rate `Γ₁ε·pop_p`.
pub fn repump_friction(species: &IonSpecies, lasers: &LaserParams, h: f64) -> Result<f64, CoolingError> {
    let force = |v: f64| -> Result<f64, CoolingError> {
        let s = solve_bloch(species, lasers, lasers.delta_397, lasers.delta_866 - species.k2 * v)?;
        Ok(HBAR * species.k2 * species.gamma1 * species.leak_fraction * s.pop_p)
    };
    Ok(-(force(h)? - force(-h)?) / (2.0 * h))
}

/// Directional friction, scattering rate and momentum diffusion at rest.
/// `t_pred` is left `None`; see [`cooling_response`].
pub fn friction_coefficient(species: &IonSpecies, lasers: &LaserParams) -> Result<CoolingResponse, CoolingError> {
    let h = default_velocity_step(species);
    let beta_beam = beam_friction(species, lasers, h)?;
    let beta_repump = repump_friction(species, lasers, 0.01 * species.gamma1 / species.k2)?;
    let steady = solve_bloch(species, lasers, lasers.delta_397, lasers.delta_866)?;
    let scatter_rate = species.gamma1 * steady.pop_p;
    let (u1, _) = beam_directions(lasers);
    let recoil = HBAR * HBAR * species.k1 * species.k1 * scatter_rate;
    let d_photon = Vec3::from_fn(|a, _| 0.5 * recoil * (u1[a] * u1[a] + 1.0 / 3.0));
    let tilt = libm::sin(lasers.phi_y);
    Ok(CoolingResponse {
        beta_x: beta_beam * u1.x * u1.x,
        beta_y: beta_repump * tilt * tilt,
        beta_z: beta_beam * u1.z * u1.z,
        beta_beam,
        beta_repump,
        scatter_rate,
        d_photon,
        t_pred: None,
        steady,
    })
}

/// Full response including the predicted z temperature.
pub fn cooling_response(
    species: &IonSpecies,
    lasers: &LaserParams,
    bath: &BathParams,
) -> Result<CoolingResponse, CoolingError> {
    let mut r = friction_coefficient(species, lasers)?;
    r.t_pred = r.axis_temperature(2, species.mass, bath);
    Ok(r)
}

/// Predicted stationary temperature along z: photon-recoil term plus bath
/// term, each divided by `k_B β_z`.
pub fn predicted_temperature(
    species: &IonSpecies,
    lasers: &LaserParams,
    bath: &BathParams,
) -> Result<f64, CoolingError> {
    let r = friction_coefficient(species, lasers)?;
    r.axis_temperature(2, species.mass, bath).ok_or(CoolingError::NonPositiveFriction { beta: r.beta_z })
}

/// Inclusive scan over an angular-frequency axis, rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyRange {
    /// First value.
    pub start: f64,
    /// Last value (inclusive).
    pub end: f64,
    /// Positive spacing.
    pub step: f64,
}

impl FrequencyRange {
    /// Range given in MHz.
    pub fn from_mhz(start: f64, end: f64, step: f64) -> Self {
        Self { start: mhz_to_angular(start), end: mhz_to_angular(end), step: mhz_to_angular(step) }
    }

    /// Grid values; empty if the range is malformed.
    pub fn values(&self) -> alloc::vec::Vec<f64> {
        if !(self.step > 0.0) || !(self.end >= self.start) {
            return alloc::vec::Vec::new();
        }
        let n = libm::floor((self.end - self.start) / self.step + 1e-9) as usize;
        (0..=n).map(|i| self.start + i as f64 * self.step).collect()
    }
}

/// Default Δ scan used to locate the friction window, −150…+30 MHz.
pub fn default_window_scan() -> FrequencyRange {
    FrequencyRange::from_mhz(-150.0, 30.0, 1.0)
}

fn bisect<F: FnMut(f64) -> Result<f64, CoolingError>>(
    mut f: F,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) -> Result<f64, CoolingError> {
    let mut f_lo = f(lo)?;
    for _ in 0..200 {
        if (hi - lo).abs() <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let f_mid = f(mid)?;
        if (f_mid > 0.0) == (f_lo > 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn golden_max<F: FnMut(f64) -> Result<f64, CoolingError>>(
    mut f: F,
    mut a: f64,
    mut b: f64,
    tol: f64,
) -> Result<f64, CoolingError> {
    let r = 0.5 * (libm::sqrt(5.0) - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d)?;
        }
    }
    Ok(0.5 * (a + b))
}

/// Width of the detuning window in Hz: the distance from the friction
/// maximum to the friction zero closest to Δ = 0 on its blue side.
pub fn detuning_window(species: &IonSpecies, lasers: &LaserParams, scan: &FrequencyRange) -> Result<f64, CoolingError> {
    let grid = scan.values();
    if grid.len() < 3 {
        return Err(CoolingError::InvalidRange);
    }
    let h = default_velocity_step(species);
    let mut beta_at = |d: f64| beam_friction(species, &lasers.with_delta_397(d), h);
    let betas = grid.iter().map(|&d| beta_at(d)).collect::<Result<alloc::vec::Vec<_>, _>>()?;
    let (imax, &bmax) =
        betas.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).ok_or(CoolingError::WindowNotBracketed)?;
    if !(bmax > 0.0) {
        return Err(CoolingError::WindowNotBracketed);
    }
    let crossing = (imax..grid.len() - 1)
        .filter(|&i| betas[i] > 0.0 && betas[i + 1] <= 0.0)
        .min_by(|&a, &b| grid[a].abs().total_cmp(&grid[b].abs()))
        .ok_or(CoolingError::WindowNotBracketed)?;
    let tol = 1e-7 * species.gamma1;
    let zero = bisect(&mut beta_at, grid[crossing], grid[crossing + 1], tol)?;
    let lo = grid[imax.saturating_sub(1)];
    let hi = grid[(imax + 1).min(grid.len() - 1)];
    let peak = golden_max(&mut beta_at, lo, hi, tol)?;
    Ok((zero - peak).abs() / (2.0 * PI))
}

/// Result of inverting the Ω ↦ Δ_w relation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RabiEstimate {
    /// Rabi frequency reproducing the window, rad/s.
    pub omega_rabi: f64,
    /// Least-squares slope dΔ_w/dΩ over the table (Hz per rad/s).
    pub slope: f64,
    /// Least-squares intercept of the table, Hz.
    pub intercept_hz: f64,
}

/// Default tabulation range for Ω, 2π × (20…200) MHz.
pub fn default_rabi_table() -> FrequencyRange {
    FrequencyRange::from_mhz(20.0, 200.0, 10.0)
}

/// Find the Rabi frequency whose detuning window equals `delta_w_hz`,
/// holding every other laser setting fixed.
pub fn rabi_from_window(
    delta_w_hz: f64,
    species: &IonSpecies,
    lasers: &LaserParams,
    scan: &FrequencyRange,
    table: &FrequencyRange,
) -> Result<RabiEstimate, CoolingError> {
    if !(delta_w_hz > 0.0) {
        return Err(CoolingError::DegenerateWindow);
    }
    let omegas = table.values();
    if omegas.len() < 2 {
        return Err(CoolingError::InvalidRange);
    }
    let window = |w: f64| {
        let l = LaserParams { omega_rabi: w, ..*lasers };
        detuning_window(species, &l, scan)
    };
    let widths = omegas.iter().map(|&w| window(w)).collect::<Result<alloc::vec::Vec<_>, _>>()?;

    let n = omegas.len() as f64;
    let mx = omegas.iter().sum::<f64>() / n;
    let my = widths.iter().sum::<f64>() / n;
    let sxy: f64 = omegas.iter().zip(&widths).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = omegas.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    let intercept_hz = my - slope * mx;

    let bracket = (0..omegas.len() - 1).find(|&i| {
        let (a, b) = (widths[i], widths[i + 1]);
        (a <= delta_w_hz && delta_w_hz <= b) || (b <= delta_w_hz && delta_w_hz <= a)
    });
    let Some(i) = bracket else {
        let (min_hz, max_hz) =
            widths.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &w| (lo.min(w), hi.max(w)));
        return Err(CoolingError::OutOfTable { delta_w_hz, min_hz, max_hz });
    };
    let omega_rabi = bisect(|w| Ok(window(w)? - delta_w_hz), omegas[i], omegas[i + 1], 1e-9 * omegas[i + 1])?;
    Ok(RabiEstimate { omega_rabi, slope, intercept_hz })
}

/// Default population floor for [`dark_resonance_guard`].
pub const DEFAULT_DARK_FLOOR: f64 = 1e-3;

/// Outcome of [`dark_resonance_guard`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuardOutcome {
    /// Lasers to use.
    pub lasers: LaserParams,
    /// Original δ when it was changed, rad/s.
    pub adjusted_from: Option<f64>,
}

/// Keep the repump blue of every Δ in `sweep` so the Raman dark resonance
/// Δ = δ is never crossed. δ is raised in 1 MHz steps until `pop_p` stays
/// above `floor` over the whole sweep (capped at +1 GHz).
pub fn dark_resonance_guard(
    species: &IonSpecies,
    lasers: &LaserParams,
    sweep: &FrequencyRange,
    floor: f64,
) -> GuardOutcome {
    let unchanged = GuardOutcome { lasers: *lasers, adjusted_from: None };
    let grid = sweep.values();
    let Some(top) = grid.iter().copied().reduce(f64::max) else {
        return unchanged;
    };
    if lasers.omega_rabi_repump == 0.0 || lasers.delta_866 > top {
        return unchanged;
    }
    let step = mhz_to_angular(1.0);
    let cap = mhz_to_angular(1000.0);
    let mut delta_r = libm::floor(top / step) * step + step;
    loop {
        let trial = LaserParams { delta_866: delta_r, ..*lasers };
        let ok = grid.iter().all(|&d| solve_bloch(species, &trial, d, delta_r).is_ok_and(|s| s.pop_p >= floor));
        if ok || delta_r >= cap {
            return GuardOutcome { lasers: trial, adjusted_from: Some(lasers.delta_866) };
        }
        delta_r += step;
    }
}

type CacheKey = (i64, i64, i64, u64, u64, u64);

/// Per-worker memo of [`cooling_response`], keyed on (Δ, δ, Ω) quantized to
/// 1 kHz plus the exact remaining laser settings. The response is evaluated
/// at the quantized detunings so results do not depend on lookup order.
#[derive(Debug, Clone)]
pub struct CoolingCache {
    species: IonSpecies,
    bath: BathParams,
    entries: BTreeMap<CacheKey, CoolingResponse>,
}

const CACHE_QUANTUM: f64 = 2.0 * PI * 1e3;

fn quantize(w: f64) -> i64 {
    libm::round(w / CACHE_QUANTUM) as i64
}

impl CoolingCache {
    /// Empty cache for one species and bath.
    pub fn new(species: IonSpecies, bath: BathParams) -> Self {
        Self { species, bath, entries: BTreeMap::new() }
    }

    /// Memoized [`cooling_response`].
    pub fn response(&mut self, lasers: &LaserParams) -> Result<CoolingResponse, CoolingError> {
        let key = (
            quantize(lasers.delta_397),
            quantize(lasers.delta_866),
            quantize(lasers.omega_rabi),
            lasers.omega_rabi_repump.to_bits(),
            lasers.theta.to_bits(),
            lasers.phi_y.to_bits(),
        );
        if let Some(r) = self.entries.get(&key) {
            return Ok(*r);
        }
        let snapped = LaserParams {
            delta_397: key.0 as f64 * CACHE_QUANTUM,
            delta_866: key.1 as f64 * CACHE_QUANTUM,
            omega_rabi: key.2 as f64 * CACHE_QUANTUM,
            ..*lasers
        };
        let r = cooling_response(&self.species, &snapped, &self.bath)?;
        self.entries.insert(key, r);
        Ok(r)
    }

    /// Number of distinct settings evaluated so far.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Whether nothing has been evaluated yet.
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
