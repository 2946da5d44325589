//! Zero-temperature structure of the crystal: potential energy, equilibria,
//! Hessian, normal modes and the critical anisotropy of the linear chain.
//!
//! Solvers work in natural units: length `ℓ = (q²/(4πε₀ m ω_z²))^{1/3}`,
//! energy `q²/(4πε₀ ℓ)`. In these units the potential is
//! `Σ ½(α²x² + γ²y² + z²) + Σ 1/r`.

use alloc::vec::Vec;

use nalgebra::{linalg::SymmetricEigen, DMatrix, DVector};
use thiserror::Error;

use crate::config::TrapParams;
use crate::constants::coulomb_coupling;
use crate::species::IonSpecies;
use crate::Vec3;

/// Separation below which two ions count as coincident, m.
pub const COINCIDENCE_DISTANCE: f64 = 1e-9;
/// Equilibrium force residual relative to `q²/(4πε₀ℓ²)`.
pub const FORCE_TOLERANCE: f64 = 1e-10;
const MAX_ITERATIONS: usize = 500;

/// Failures of the static solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum StaticsError {
    /// Two ions closer than [`COINCIDENCE_DISTANCE`].
    #[error("ions {0} and {1} coincide")]
    CoincidentIons(usize, usize),
    /// Minimizer stopped before reaching [`FORCE_TOLERANCE`].
    #[error("equilibrium search did not converge (residual {residual:e} after {iterations} iterations)")]
    NoConvergence {
        /// Iterations used.
        iterations: usize,
        /// Final force residual in natural units.
        residual: f64,
    },
    /// Symmetric eigensolver did not converge.
    #[error("eigensolver failed")]
    Eigen,
    /// No sign change of the soft-mode frequency² inside the search interval.
    #[error("critical anisotropy not bracketed")]
    BracketFailure,
    /// Operation needs more ions.
    #[error("need at least {0} ions")]
    TooFewIons(usize),
}

/// Natural length unit of the trap, m.
pub fn length_scale(trap: &TrapParams, species: &IonSpecies) -> f64 {
    libm::cbrt(coulomb_coupling(species.charge) / (species.mass * trap.omega_z * trap.omega_z))
}

/// Natural energy unit `q²/(4πε₀ℓ)`, J.
pub fn energy_scale(trap: &TrapParams, species: &IonSpecies) -> f64 {
    coulomb_coupling(species.charge) / length_scale(trap, species)
}

/// Natural force unit `q²/(4πε₀ℓ²)`, N.
pub fn force_scale(trap: &TrapParams, species: &IonSpecies) -> f64 {
    let l = length_scale(trap, species);
    coulomb_coupling(species.charge) / (l * l)
}

fn check_coincident(positions: &[Vec3]) -> Result<(), StaticsError> {
    for i in 0..positions.len() {
        for j in i + 1..positions.len() {
            if (positions[i] - positions[j]).norm() < COINCIDENCE_DISTANCE {
                return Err(StaticsError::CoincidentIons(i, j));
            }
        }
    }
    Ok(())
}

/// Harmonic pseudopotential plus pairwise Coulomb energy, J.
pub fn potential_energy(positions: &[Vec3], trap: &TrapParams, species: &IonSpecies) -> Result<f64, StaticsError> {
    check_coincident(positions)?;
    let w2 = trap.omega_squared();
    let k = coulomb_coupling(species.charge);
    let mut trap_sum = 0.0;
    let mut coulomb = 0.0;
    for (i, p) in positions.iter().enumerate() {
        trap_sum += w2[0] * p.x * p.x + w2[1] * p.y * p.y + w2[2] * p.z * p.z;
        for q in &positions[i + 1..] {
            coulomb += 1.0 / (p - q).norm();
        }
    }
    Ok(0.5 * species.mass * trap_sum + k * coulomb)
}

/// Analytic Hessian of [`potential_energy`], 3N × 3N, N/m. Row/column
/// `3i + a` is coordinate `a` (x, y, z) of ion `i`.
pub fn hessian(positions: &[Vec3], trap: &TrapParams, species: &IonSpecies) -> Result<DMatrix<f64>, StaticsError> {
    check_coincident(positions)?;
    let n = positions.len();
    let w2 = trap.omega_squared();
    let k = coulomb_coupling(species.charge);
    let mut h = DMatrix::zeros(3 * n, 3 * n);
    for i in 0..n {
        for a in 0..3 {
            h[(3 * i + a, 3 * i + a)] = species.mass * w2[a];
        }
    }
    add_coulomb_hessian(&mut h, positions, k);
    Ok(h)
}

fn add_coulomb_hessian(h: &mut DMatrix<f64>, positions: &[Vec3], k: f64) {
    let n = positions.len();
    for i in 0..n {
        for j in i + 1..n {
            let r = positions[i] - positions[j];
            let d2 = r.norm_squared();
            let d = libm::sqrt(d2);
            let inv3 = k / (d2 * d);
            let inv5 = 3.0 * inv3 / d2;
            for a in 0..3 {
                for b in 0..3 {
                    let mut v = inv5 * (r[a] * r[b]);
                    if a == b {
                        v -= inv3;
                    }
                    h[(3 * i + a, 3 * i + b)] += v;
                    h[(3 * j + a, 3 * j + b)] += v;
                    h[(3 * i + a, 3 * j + b)] -= v;
                    h[(3 * j + a, 3 * i + b)] -= v;
                }
            }
        }
    }
}

/// Normal modes about a configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSpectrum {
    /// Eigenvalues of the mass-scaled Hessian, ascending, (rad/s)².
    pub frequencies_squared: Vec<f64>,
    /// Orthonormal eigenvectors as columns, same order.
    pub eigenvectors: DMatrix<f64>,
    /// Index of the lowest mode.
    pub soft_mode_index: usize,
}

impl ModeSpectrum {
    /// Mode frequencies, rad/s; negative for unstable modes (sign of ω²).
    pub fn signed_frequencies(&self) -> Vec<f64> {
        self.frequencies_squared.iter().map(|&w2| libm::copysign(libm::sqrt(w2.abs()), w2)).collect()
    }

    /// Share of mode `k`'s eigenvector along coordinate axis `axis`.
    pub fn axis_weight(&self, k: usize, axis: usize) -> f64 {
        let col = self.eigenvectors.column(k);
        (0..col.len() / 3).map(|i| col[3 * i + axis] * col[3 * i + axis]).sum()
    }
}

/// Mass-scaled eigendecomposition of a Hessian.
pub fn normal_modes(hessian: &DMatrix<f64>, species: &IonSpecies) -> Result<ModeSpectrum, StaticsError> {
    let scaled = hessian / species.mass;
    let eig = SymmetricEigen::try_new(scaled, 1e-15, 10_000).ok_or(StaticsError::Eigen)?;
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let frequencies_squared = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let eigenvectors = DMatrix::from_fn(hessian.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(ModeSpectrum { frequencies_squared, eigenvectors, soft_mode_index: 0 })
}

/// Starting point for [`equilibrium_positions`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SeedPolicy {
    /// Ions on the z axis. The search stays on the axis, so this returns the
    /// symmetric chain even where it is a saddle.
    LinearChain,
    /// Chain with alternating ±x offsets of `amplitude` natural lengths.
    Zigzag {
        /// Offset in units of ℓ.
        amplitude: f64,
    },
}

impl SeedPolicy {
    /// Zigzag seed with the standard 0.05 ℓ offsets.
    pub const ZIGZAG: SeedPolicy = SeedPolicy::Zigzag { amplitude: 0.05 };
}

/// A converged static configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumConfiguration {
    /// Ion positions, m, ordered along z.
    pub positions: Vec<Vec3>,
    /// Potential energy, J.
    pub energy: f64,
    /// Largest force component left, N.
    pub gradient_norm: f64,
}

struct Objective {
    energy: f64,
    gradient: DVector<f64>,
}

/// Natural-unit energy and gradient of the 3D potential; `None` if ions coincide.
fn objective_3d(x: &DVector<f64>, w2: &[f64; 3]) -> Option<Objective> {
    let n = x.len() / 3;
    let mut energy = 0.0;
    let mut gradient = DVector::zeros(x.len());
    for i in 0..n {
        for a in 0..3 {
            let v = x[3 * i + a];
            energy += 0.5 * w2[a] * v * v;
            gradient[3 * i + a] += w2[a] * v;
        }
        for j in i + 1..n {
            let r = Vec3::new(x[3 * i] - x[3 * j], x[3 * i + 1] - x[3 * j + 1], x[3 * i + 2] - x[3 * j + 2]);
            let d = r.norm();
            if !(d > 1e-12) {
                return None;
            }
            energy += 1.0 / d;
            let f = r / (d * d * d);
            for a in 0..3 {
                gradient[3 * i + a] -= f[a];
                gradient[3 * j + a] += f[a];
            }
        }
    }
    Some(Objective { energy, gradient })
}

fn hessian_3d(x: &DVector<f64>, w2: &[f64; 3]) -> DMatrix<f64> {
    let n = x.len() / 3;
    let positions: Vec<Vec3> = (0..n).map(|i| Vec3::new(x[3 * i], x[3 * i + 1], x[3 * i + 2])).collect();
    let mut h = DMatrix::zeros(3 * n, 3 * n);
    for i in 0..n {
        for a in 0..3 {
            h[(3 * i + a, 3 * i + a)] = w2[a];
        }
    }
    add_coulomb_hessian(&mut h, &positions, 1.0);
    h
}

fn objective_axial(z: &DVector<f64>) -> Option<Objective> {
    let n = z.len();
    let mut energy = 0.0;
    let mut gradient = DVector::zeros(n);
    for i in 0..n {
        energy += 0.5 * z[i] * z[i];
        gradient[i] += z[i];
        for j in i + 1..n {
            let r = z[i] - z[j];
            let d = r.abs();
            if !(d > 1e-12) {
                return None;
            }
            energy += 1.0 / d;
            let f = r / (d * d * d);
            gradient[i] -= f;
            gradient[j] += f;
        }
    }
    Some(Objective { energy, gradient })
}

fn hessian_axial(z: &DVector<f64>) -> DMatrix<f64> {
    let n = z.len();
    let mut h = DMatrix::identity(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let d = (z[i] - z[j]).abs();
            let c = 2.0 / (d * d * d);
            h[(i, i)] += c;
            h[(j, j)] += c;
            h[(i, j)] -= c;
            h[(j, i)] -= c;
        }
    }
    h
}

/// Newton's method with eigenvalue-modified Hessian and Armijo backtracking.
fn minimize<F, H>(mut x: DVector<f64>, objective: F, hess: H) -> Result<(DVector<f64>, f64, f64), StaticsError>
where
    F: Fn(&DVector<f64>) -> Option<Objective>,
    H: Fn(&DVector<f64>) -> DMatrix<f64>,
{
    let mut current = objective(&x).ok_or(StaticsError::CoincidentIons(0, 0))?;
    let mut residual = current.gradient.amax();
    for iteration in 0..MAX_ITERATIONS {
        if residual < 0.1 * FORCE_TOLERANCE {
            return Ok((x, current.energy, residual));
        }
        let eig = SymmetricEigen::try_new(hess(&x), 1e-15, 10_000).ok_or(StaticsError::Eigen)?;
        let scale = eig.eigenvalues.amax().max(1e-300);
        let proj = eig.eigenvectors.transpose() * &current.gradient;
        let scaled = DVector::from_fn(proj.len(), |k, _| proj[k] / eig.eigenvalues[k].abs().max(1e-10 * scale));
        let step = -(&eig.eigenvectors * scaled);
        let slope = current.gradient.dot(&step);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial = &x + t * &step;
            if let Some(o) = objective(&trial) {
                let slack = 1e-14 * current.energy.abs();
                if o.energy <= current.energy + 1e-4 * t * slope + slack {
                    accepted = Some((trial, o));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((next, o)) = accepted else {
            return if residual < FORCE_TOLERANCE {
                Ok((x, current.energy, residual))
            } else {
                Err(StaticsError::NoConvergence { iterations: iteration, residual })
            };
        };
        x = next;
        current = o;
        residual = current.gradient.amax();
    }
    if residual < FORCE_TOLERANCE {
        Ok((x, current.energy, residual))
    } else {
        Err(StaticsError::NoConvergence { iterations: MAX_ITERATIONS, residual })
    }
}

/// Axial positions of the linear chain in natural units, ascending.
pub fn linear_chain(n_ions: usize) -> Result<Vec<f64>, StaticsError> {
    if n_ions == 0 {
        return Err(StaticsError::TooFewIons(1));
    }
    let seed = DVector::from_fn(n_ions, |i, _| i as f64 - 0.5 * (n_ions as f64 - 1.0));
    let (z, _, _) = minimize(seed, objective_axial, hessian_axial)?;
    Ok(z.iter().copied().collect())
}

/// Highest axial mode of the linear chain in units of ω_z.
pub fn axial_mode_ceiling(n_ions: usize) -> f64 {
    let Ok(z) = linear_chain(n_ions.max(1)) else {
        return 1.0;
    };
    let h = hessian_axial(&DVector::from_vec(z));
    let top = SymmetricEigen::try_new(h, 1e-15, 10_000).map_or(1.0, |e| e.eigenvalues.max());
    libm::sqrt(top.max(1.0))
}

/// Local minimum of [`potential_energy`] reached from `seed`.
pub fn equilibrium_positions(
    n_ions: usize,
    trap: &TrapParams,
    species: &IonSpecies,
    seed: SeedPolicy,
) -> Result<EquilibriumConfiguration, StaticsError> {
    let chain = linear_chain(n_ions)?;
    let w2 = [trap.alpha * trap.alpha, trap.gamma_y * trap.gamma_y, 1.0];
    let natural: Vec<Vec3> = match seed {
        SeedPolicy::LinearChain => chain.iter().map(|&z| Vec3::new(0.0, 0.0, z)).collect(),
        SeedPolicy::Zigzag { amplitude } => {
            let start = DVector::from_fn(3 * n_ions, |k, _| match k % 3 {
                0 if n_ions > 1 => {
                    if (k / 3) % 2 == 0 {
                        amplitude
                    } else {
                        -amplitude
                    }
                }
                2 => chain[k / 3],
                _ => 0.0,
            });
            let (x, _, _) = minimize(start, |x| objective_3d(x, &w2), |x| hessian_3d(x, &w2))?;
            let mut p: Vec<Vec3> = (0..n_ions).map(|i| Vec3::new(x[3 * i], x[3 * i + 1], x[3 * i + 2])).collect();
            p.sort_by(|a, b| a.z.total_cmp(&b.z));
            p
        }
    };
    let flat = DVector::from_fn(3 * n_ions, |k, _| natural[k / 3][k % 3]);
    let residual = objective_3d(&flat, &w2).map_or(f64::INFINITY, |o| o.gradient.amax());
    let l = length_scale(trap, species);
    let positions: Vec<Vec3> = natural.iter().map(|p| p * l).collect();
    Ok(EquilibriumConfiguration {
        energy: potential_energy(&positions, trap, species)?,
        gradient_norm: residual * force_scale(trap, species),
        positions,
    })
}

/// Lowest mode frequency² of the linear chain with dominant x character, (rad/s)².
pub fn lowest_transverse_mode(n_ions: usize, trap: &TrapParams, species: &IonSpecies) -> Result<f64, StaticsError> {
    let chain = equilibrium_positions(n_ions, trap, species, SeedPolicy::LinearChain)?;
    let modes = normal_modes(&hessian(&chain.positions, trap, species)?, species)?;
    (0..modes.frequencies_squared.len())
        .find(|&k| modes.axis_weight(k, 0) > 0.5)
        .map(|k| modes.frequencies_squared[k])
        .ok_or(StaticsError::Eigen)
}

/// Anisotropy at which the linear chain's softest transverse mode reaches
/// zero frequency (zero-temperature linear/zigzag threshold).
pub fn critical_alpha(n_ions: usize, trap: &TrapParams, species: &IonSpecies) -> Result<f64, StaticsError> {
    if n_ions < 2 {
        return Err(StaticsError::TooFewIons(2));
    }
    let f = |alpha: f64| {
        let t = TrapParams { alpha, gamma_y: trap.gamma_y.max(4.0 * alpha), ..*trap };
        lowest_transverse_mode(n_ions, &t, species)
    };
    let mut lo = 0.5;
    let mut hi = 2.0 * n_ions as f64 + 2.0;
    if !(f(lo)? < 0.0 && f(hi)? > 0.0) {
        return Err(StaticsError::BracketFailure);
    }
    while hi - lo > 1e-13 * hi {
        let mid = 0.5 * (lo + hi);
        if f(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Energy difference between the linear chain and the zigzag, J; zero when
/// no zigzag basin exists.
pub fn zigzag_barrier(n_ions: usize, trap: &TrapParams, species: &IonSpecies) -> Result<f64, StaticsError> {
    let linear = equilibrium_positions(n_ions, trap, species, SeedPolicy::LinearChain)?;
    let zigzag = equilibrium_positions(n_ions, trap, species, SeedPolicy::ZIGZAG)?;
    Ok((linear.energy - zigzag.energy).max(0.0))
}

/// Linear-chain positions in metres.
pub fn chain_positions(n_ions: usize, trap: &TrapParams, species: &IonSpecies) -> Result<Vec<Vec3>, StaticsError> {
    let l = length_scale(trap, species);
    Ok(linear_chain(n_ions)?.into_iter().map(|z| Vec3::new(0.0, 0.0, z * l)).collect())
}
