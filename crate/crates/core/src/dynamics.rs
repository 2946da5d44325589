//! Langevin dynamics: Coulomb and trap forces, directional friction with
//! photon-recoil and bath noise, a BAOAB splitting integrator, and
//! trajectories with burn-in and sampling.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::config::{BathParams, ExperimentConfig, LaserParams, TrapParams};
use crate::constants::{coulomb_coupling, K_B};
use crate::cooling::{CoolingCache, CoolingError, CoolingResponse};
use crate::observables::order_parameter_dx;
use crate::rng::{stream, NormalSource};
use crate::species::IonSpecies;
use crate::statics::{chain_positions, StaticsError, COINCIDENCE_DISTANCE};
use crate::Vec3;

/// Speed above which a trajectory is declared unstable, m/s.
pub const MAX_SPEED: f64 = 1e3;

/// Failures while integrating.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    /// Two ions closer than 1 nm.
    #[error("ions {0} and {1} coincide")]
    CoincidentIons(usize, usize),
    /// An ion exceeded [`MAX_SPEED`].
    #[error("unstable: ion {ion} reached {speed:.3e} m/s at t = {time:.6e} s")]
    Unstable {
        /// Offending ion.
        ion: usize,
        /// Its speed, m/s.
        speed: f64,
        /// Simulation time, s.
        time: f64,
    },
    /// No sampled steps remain after burn-in.
    #[error("empty sampling window")]
    EmptySamplingWindow,
    /// A schedule without segments.
    #[error("empty schedule")]
    EmptySchedule,
    /// Sweep grid not strictly monotone.
    #[error("sweep grid is not strictly monotone")]
    NonMonotoneGrid,
    /// Cooling model failure.
    #[error(transparent)]
    Cooling(#[from] CoolingError),
    /// Statics failure while building the initial chain.
    #[error(transparent)]
    Statics(#[from] StaticsError),
}

/// Positions and velocities of all ions at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct CrystalState {
    /// m
    pub positions: Vec<Vec3>,
    /// m/s
    pub velocities: Vec<Vec3>,
    /// s
    pub time: f64,
}

impl CrystalState {
    /// Ions at rest at `positions`, t = 0.
    pub fn at_rest(positions: Vec<Vec3>) -> Self {
        let velocities = vec![Vec3::zeros(); positions.len()];
        Self { positions, velocities, time: 0.0 }
    }

    /// Number of ions.
    pub fn n_ions(&self) -> usize {
        self.positions.len()
    }
}

/// Trap plus Coulomb force on every ion, written into `out`, N.
pub fn total_force_into(
    positions: &[Vec3],
    trap: &TrapParams,
    species: &IonSpecies,
    out: &mut [Vec3],
) -> Result<(), DynamicsError> {
    let w2 = trap.omega_squared();
    let m = species.mass;
    let k = coulomb_coupling(species.charge);
    for (f, p) in out.iter_mut().zip(positions) {
        *f = Vec3::new(-m * w2[0] * p.x, -m * w2[1] * p.y, -m * w2[2] * p.z);
    }
    let min2 = COINCIDENCE_DISTANCE * COINCIDENCE_DISTANCE;
    for i in 0..positions.len() {
        for j in i + 1..positions.len() {
            let r = positions[i] - positions[j];
            let d2 = r.norm_squared();
            if d2 < min2 {
                return Err(DynamicsError::CoincidentIons(i, j));
            }
            let f = r * (k / (d2 * libm::sqrt(d2)));
            out[i] += f;
            out[j] -= f;
        }
    }
    Ok(())
}

/// Trap plus Coulomb force on every ion, N.
pub fn total_force(state: &CrystalState, trap: &TrapParams, species: &IonSpecies) -> Result<Vec<Vec3>, DynamicsError> {
    let mut out = vec![Vec3::zeros(); state.n_ions()];
    total_force_into(&state.positions, trap, species, &mut out)?;
    Ok(out)
}

/// Per-axis friction and total force-noise strength felt by each ion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalCoupling {
    /// Friction per axis, N·s/m.
    pub friction: Vec3,
    /// Force diffusion per axis, `⟨F F⟩ = 2D δ(t)`, N²·s.
    pub diffusion: Vec3,
}

impl ThermalCoupling {
    /// Laser friction and recoil plus the bath's `½ m E_e` per axis.
    pub fn from_response(response: &CoolingResponse, mass: f64, bath: &BathParams) -> Self {
        Self { friction: response.friction(), diffusion: response.d_photon.add_scalar(0.5 * mass * bath.e_e) }
    }

    /// Fixed isotropic friction with bath noise only.
    pub fn bath_only(beta: f64, mass: f64, bath: &BathParams) -> Self {
        Self { friction: Vec3::repeat(beta), diffusion: Vec3::repeat(0.5 * mass * bath.e_e) }
    }

    /// Stationary temperature `D/(k_B β)` on `axis`; `None` if uncooled.
    pub fn stationary_temperature(&self, axis: usize) -> Option<f64> {
        (self.friction[axis] > 0.0).then(|| self.diffusion[axis] / (K_B * self.friction[axis]))
    }
}

/// BAOAB integrator with the friction/noise sub-step solved exactly.
#[derive(Debug, Clone)]
pub struct Integrator {
    trap: TrapParams,
    species: IonSpecies,
    dt: f64,
    decay: Vec3,
    kick: Vec3,
    forces: Vec<Vec3>,
    forces_at: Option<f64>,
}

fn ou_coefficients(beta: f64, diffusion: f64, mass: f64, dt: f64) -> (f64, f64) {
    let x = beta / mass * dt;
    if x.abs() < 1e-10 {
        (1.0 - x, libm::sqrt(2.0 * diffusion * dt * (1.0 - x)) / mass)
    } else {
        let decay = libm::exp(-x);
        let var = diffusion / (mass * beta) * -libm::expm1(-2.0 * x);
        (decay, libm::sqrt(var.max(0.0)))
    }
}

impl Integrator {
    /// Integrator for step `dt` (s) with the given coupling.
    pub fn new(trap: TrapParams, species: IonSpecies, dt: f64, coupling: &ThermalCoupling) -> Self {
        let mut it =
            Self { trap, species, dt, decay: Vec3::zeros(), kick: Vec3::zeros(), forces: Vec::new(), forces_at: None };
        it.set_coupling(coupling);
        it
    }

    /// Change friction and noise (for example after a detuning step).
    pub fn set_coupling(&mut self, coupling: &ThermalCoupling) {
        for a in 0..3 {
            let (d, k) = ou_coefficients(coupling.friction[a], coupling.diffusion[a], self.species.mass, self.dt);
            self.decay[a] = d;
            self.kick[a] = k;
        }
    }

    /// Step size, s.
    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advance `state` by one step.
    pub fn step<N: NormalSource + ?Sized>(
        &mut self,
        state: &mut CrystalState,
        noise: &mut N,
    ) -> Result<(), DynamicsError> {
        let n = state.n_ions();
        if self.forces_at != Some(state.time) || self.forces.len() != n {
            self.forces.resize(n, Vec3::zeros());
            total_force_into(&state.positions, &self.trap, &self.species, &mut self.forces)?;
        }
        let half = 0.5 * self.dt;
        let half_kick = half / self.species.mass;
        for i in 0..n {
            state.velocities[i] += self.forces[i] * half_kick;
            state.positions[i] += state.velocities[i] * half;
            for a in 0..3 {
                let v = &mut state.velocities[i][a];
                *v *= self.decay[a];
                if self.kick[a] != 0.0 {
                    *v += self.kick[a] * noise.standard_normal();
                }
            }
            state.positions[i] += state.velocities[i] * half;
        }
        total_force_into(&state.positions, &self.trap, &self.species, &mut self.forces)?;
        state.time += self.dt;
        self.forces_at = Some(state.time);
        let limit = MAX_SPEED * MAX_SPEED;
        for i in 0..n {
            state.velocities[i] += self.forces[i] * half_kick;
            let s2 = state.velocities[i].norm_squared();
            if !(s2 <= limit) {
                return Err(DynamicsError::Unstable { ion: i, speed: libm::sqrt(s2), time: state.time });
            }
        }
        Ok(())
    }
}

/// One step of the Langevin integrator; prefer [`Integrator`] in loops,
/// which reuses forces between steps.
pub fn step<N: NormalSource + ?Sized>(
    state: &mut CrystalState,
    dt: f64,
    trap: &TrapParams,
    species: &IonSpecies,
    coupling: &ThermalCoupling,
    noise: &mut N,
) -> Result<(), DynamicsError> {
    Integrator::new(*trap, *species, dt, coupling).step(state, noise)
}

/// Time-averaged statistics of a sampled trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySummary {
    /// Mean position of each ion, m.
    pub mean_positions: Vec<Vec3>,
    /// Position variance of each ion per axis, m².
    pub position_variances: Vec<Vec3>,
    /// ⟨v²⟩ per axis averaged over ions, (m/s)².
    pub velocity_second_moments: Vec3,
    /// Number of samples.
    pub sample_count: u64,
    /// Instantaneous order parameter at each sample, m.
    pub order_samples: Vec<f64>,
}

impl TrajectorySummary {
    /// Pool two disjoint sample sets of the same crystal.
    pub fn merge(&self, other: &Self) -> Self {
        let (n1, n2) = (self.sample_count as f64, other.sample_count as f64);
        let n = n1 + n2;
        let (w1, w2) = (n1 / n, n2 / n);
        let mean_positions: Vec<Vec3> =
            self.mean_positions.iter().zip(&other.mean_positions).map(|(a, b)| a * w1 + b * w2).collect();
        let position_variances = (0..mean_positions.len())
            .map(|i| {
                let m = mean_positions[i];
                let second =
                    |s: &Self| s.position_variances[i] + s.mean_positions[i].component_mul(&s.mean_positions[i]);
                (second(self) * w1 + second(other) * w2 - m.component_mul(&m)).map(|v| v.max(0.0))
            })
            .collect();
        let mut order_samples = self.order_samples.clone();
        order_samples.extend_from_slice(&other.order_samples);
        Self {
            mean_positions,
            position_variances,
            velocity_second_moments: self.velocity_second_moments * w1 + other.velocity_second_moments * w2,
            sample_count: self.sample_count + other.sample_count,
            order_samples,
        }
    }
}

#[derive(Debug, Clone)]
struct Accumulator {
    sum: Vec<Vec3>,
    sum_sq: Vec<Vec3>,
    v2: Vec3,
    count: u64,
    order_samples: Vec<f64>,
}

impl Accumulator {
    fn new(n: usize) -> Self {
        Self {
            sum: vec![Vec3::zeros(); n],
            sum_sq: vec![Vec3::zeros(); n],
            v2: Vec3::zeros(),
            count: 0,
            order_samples: Vec::new(),
        }
    }

    fn record(&mut self, state: &CrystalState) {
        for (i, p) in state.positions.iter().enumerate() {
            self.sum[i] += p;
            self.sum_sq[i] += p.component_mul(p);
        }
        let mut v2 = Vec3::zeros();
        for v in &state.velocities {
            v2 += v.component_mul(v);
        }
        self.v2 += v2 / state.n_ions() as f64;
        self.count += 1;
        self.order_samples.push(order_parameter_dx(&state.positions));
    }

    fn finish(self) -> Result<TrajectorySummary, DynamicsError> {
        if self.count == 0 {
            return Err(DynamicsError::EmptySamplingWindow);
        }
        let n = self.count as f64;
        let mean_positions: Vec<Vec3> = self.sum.iter().map(|s| s / n).collect();
        let position_variances = self
            .sum_sq
            .iter()
            .zip(&mean_positions)
            .map(|(s, m)| (s / n - m.component_mul(m)).map(|v| v.max(0.0)))
            .collect();
        Ok(TrajectorySummary {
            mean_positions,
            position_variances,
            velocity_second_moments: self.v2 / n,
            sample_count: self.count,
            order_samples: self.order_samples,
        })
    }
}

/// Constant laser setting held for a number of sampled steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    /// Lasers during the segment.
    pub lasers: LaserParams,
    /// Steps in the segment.
    pub steps: u64,
}

/// Temperature used to draw initial velocities when an axis is uncooled, K.
const FALLBACK_START_TEMPERATURE: f64 = 0.05;

/// A running trajectory: state, integrator and per-trajectory cooling memo.
#[derive(Debug, Clone)]
pub struct Trajectory<'c> {
    config: &'c ExperimentConfig,
    state: CrystalState,
    integrator: Integrator,
    cache: CoolingCache,
    response: CoolingResponse,
}

impl<'c> Trajectory<'c> {
    /// Start from the linear chain with thermal velocities at the mean
    /// predicted x/z temperature of `lasers`.
    pub fn fresh<N: NormalSource + ?Sized>(
        config: &'c ExperimentConfig,
        lasers: &LaserParams,
        noise: &mut N,
    ) -> Result<Self, DynamicsError> {
        let positions = chain_positions(config.n_ions, &config.trap, &config.species)?;
        let mut t = Self::from_state(config, CrystalState::at_rest(positions), lasers)?;
        let coupling = ThermalCoupling::from_response(&t.response, config.species.mass, &config.bath);
        let temps: Vec<f64> = [0, 2].iter().filter_map(|&a| coupling.stationary_temperature(a)).collect();
        let t0 =
            if temps.is_empty() { FALLBACK_START_TEMPERATURE } else { temps.iter().sum::<f64>() / temps.len() as f64 };
        let sigma = libm::sqrt(K_B * t0 / config.species.mass);
        for v in &mut t.state.velocities {
            for a in 0..3 {
                v[a] = sigma * noise.standard_normal();
            }
        }
        Ok(t)
    }

    /// Continue from an existing state.
    pub fn from_state(
        config: &'c ExperimentConfig,
        state: CrystalState,
        lasers: &LaserParams,
    ) -> Result<Self, DynamicsError> {
        let mut cache = CoolingCache::new(config.species, config.bath);
        let response = cache.response(lasers)?;
        let coupling = ThermalCoupling::from_response(&response, config.species.mass, &config.bath);
        let integrator = Integrator::new(config.trap, config.species, config.dt, &coupling);
        Ok(Self { config, state, integrator, cache, response })
    }

    /// Switch lasers; the cooling response is memoized per setting.
    pub fn set_lasers(&mut self, lasers: &LaserParams) -> Result<(), DynamicsError> {
        self.response = self.cache.response(lasers)?;
        let coupling = ThermalCoupling::from_response(&self.response, self.config.species.mass, &self.config.bath);
        self.integrator.set_coupling(&coupling);
        Ok(())
    }

    /// Cooling response currently applied.
    pub fn response(&self) -> &CoolingResponse {
        &self.response
    }

    /// Current state.
    pub fn state(&self) -> &CrystalState {
        &self.state
    }

    /// Consume the trajectory, returning its state.
    pub fn into_state(self) -> CrystalState {
        self.state
    }

    /// Burn-in length for the current lasers: the configured floor, extended
    /// to `burn_in_friction_times` slowest x/z friction times.
    pub fn burn_in_steps(&self) -> u64 {
        let beta = self.response.beta_x.min(self.response.beta_z);
        let mut steps = self.config.n_burn_in;
        if beta > 0.0 {
            let tau = self.config.species.mass / beta;
            let want = libm::ceil(self.config.burn_in_friction_times * tau / self.config.dt);
            if want.is_finite() && want > steps as f64 {
                steps = want as u64;
            }
        }
        steps
    }

    /// Advance without sampling.
    pub fn advance<N: NormalSource + ?Sized>(&mut self, steps: u64, noise: &mut N) -> Result<(), DynamicsError> {
        for _ in 0..steps {
            self.integrator.step(&mut self.state, noise)?;
        }
        Ok(())
    }

    /// Advance `steps`, recording every `sample_stride`-th state; `observer`
    /// sees each recorded state.
    pub fn sample<N: NormalSource + ?Sized, F: FnMut(&CrystalState)>(
        &mut self,
        steps: u64,
        noise: &mut N,
        mut observer: F,
    ) -> Result<TrajectorySummary, DynamicsError> {
        let mut acc = Accumulator::new(self.state.n_ions());
        self.sample_into(steps, noise, &mut acc, &mut observer)?;
        acc.finish()
    }

    fn sample_into<N: NormalSource + ?Sized, F: FnMut(&CrystalState)>(
        &mut self,
        steps: u64,
        noise: &mut N,
        acc: &mut Accumulator,
        observer: &mut F,
    ) -> Result<(), DynamicsError> {
        let stride = self.config.sample_stride.max(1);
        for k in 1..=steps {
            self.integrator.step(&mut self.state, noise)?;
            if k % stride == 0 {
                acc.record(&self.state);
                observer(&self.state);
            }
        }
        Ok(())
    }
}

/// Run a schedule from a fresh linear chain with an explicit noise source:
/// burn-in under the first segment's lasers, then every segment sampled
/// into one summary.
pub fn run_trajectory_with<N: NormalSource + ?Sized, F: FnMut(&CrystalState)>(
    config: &ExperimentConfig,
    schedule: &[Segment],
    noise: &mut N,
    mut observer: F,
) -> Result<TrajectorySummary, DynamicsError> {
    let first = schedule.first().ok_or(DynamicsError::EmptySchedule)?;
    if schedule.iter().map(|s| s.steps).sum::<u64>() == 0 {
        return Err(DynamicsError::EmptySamplingWindow);
    }
    let mut traj = Trajectory::fresh(config, &first.lasers, noise)?;
    let burn = traj.burn_in_steps();
    traj.advance(burn, noise)?;
    let mut acc = Accumulator::new(config.n_ions);
    for seg in schedule {
        traj.set_lasers(&seg.lasers)?;
        traj.sample_into(seg.steps, noise, &mut acc, &mut observer)?;
    }
    acc.finish()
}

/// Run a schedule on stream `(seed, 0, 0)`.
pub fn run_trajectory(
    config: &ExperimentConfig,
    schedule: &[Segment],
    seed: u64,
) -> Result<TrajectorySummary, DynamicsError> {
    run_trajectory_with(config, schedule, &mut stream(seed, 0, 0), |_| {})
}

/// How a sweep moves between grid points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepMode {
    /// Carry the state over; only `settle_steps` of re-equilibration per point.
    Carried,
    /// Restart from the linear chain with full burn-in at every point.
    Fresh,
}

/// Step the cooling detuning through `grid` (rad/s), sampling
/// `config.n_steps` at each point. In carried mode the first point gets the
/// full burn-in and later points `settle_steps`.
pub fn quasi_static_sweep<N: NormalSource + ?Sized>(
    config: &ExperimentConfig,
    grid: &[f64],
    settle_steps: u64,
    mode: SweepMode,
    noise: &mut N,
) -> Result<Vec<TrajectorySummary>, DynamicsError> {
    let ascending = grid.windows(2).all(|w| w[1] > w[0]);
    let descending = grid.windows(2).all(|w| w[1] < w[0]);
    if !(ascending || descending) {
        return Err(DynamicsError::NonMonotoneGrid);
    }
    let segment = |d: f64| Segment { lasers: config.lasers.with_delta_397(d), steps: config.n_steps };
    match mode {
        SweepMode::Fresh => grid.iter().map(|&d| run_trajectory_with(config, &[segment(d)], noise, |_| {})).collect(),
        SweepMode::Carried => {
            let Some(&first) = grid.first() else {
                return Ok(Vec::new());
            };
            if config.n_steps == 0 {
                return Err(DynamicsError::EmptySamplingWindow);
            }
            let mut traj = Trajectory::fresh(config, &segment(first).lasers, noise)?;
            let burn = traj.burn_in_steps();
            traj.advance(burn, noise)?;
            let mut out = Vec::with_capacity(grid.len());
            for (k, &d) in grid.iter().enumerate() {
                traj.set_lasers(&segment(d).lasers)?;
                if k > 0 {
                    traj.advance(settle_steps, noise)?;
                }
                out.push(traj.sample(config.n_steps, noise, |_| {})?);
            }
            Ok(out)
        }
    }
}
