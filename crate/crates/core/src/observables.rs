//! Measurements on trajectories: order parameter, kinetic temperature,
//! transition detection, straight-line fits, the bath-calibration map, and
//! synthetic camera images.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::constants::K_B;
use crate::dynamics::TrajectorySummary;
use crate::Vec3;

/// Failures of the analysis routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ObservableError {
    /// Fewer samples than a temperature estimate needs.
    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples {
        /// Required.
        needed: u64,
        /// Available.
        got: u64,
    },
    /// Too few grid points for transition detection.
    #[error("need at least {0} grid points")]
    TooFewPoints(usize),
    /// Axis not strictly ascending or inputs of unequal length.
    #[error("axis must be strictly ascending with one value per point")]
    BadAxis,
    /// The order parameter does not change significantly.
    #[error("no transition: dx range {range:e} below {threshold:e}")]
    NoTransition {
        /// max − min of the smoothed curve.
        range: f64,
        /// Significance threshold it failed to reach.
        threshold: f64,
    },
    /// Fewer than two distinct abscissae.
    #[error("linear fit needs at least two distinct x values")]
    DegenerateXs,
    /// Calibration query outside the simulated map.
    #[error("alpha_c = {alpha_c} outside calibrated range [{min}, {max}]")]
    OutOfCalibrationRange {
        /// Query.
        alpha_c: f64,
        /// Lower limit.
        min: f64,
        /// Upper limit.
        max: f64,
    },
    /// Nothing to render.
    #[error("no samples to render")]
    EmptySamples,
    /// A spot fell entirely outside the image frame.
    #[error("ion image lies outside the frame")]
    OutsideFrame,
}

/// x extent of the crystal: largest minus smallest x coordinate, m.
pub fn order_parameter_dx(positions: &[Vec3]) -> f64 {
    if positions.len() < 2 {
        return 0.0;
    }
    let (lo, hi) = positions.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.x), hi.max(p.x)));
    hi - lo
}

/// Order parameter of a trajectory from its time-averaged positions, m.
pub fn summary_dx(summary: &TrajectorySummary) -> f64 {
    order_parameter_dx(&summary.mean_positions)
}

/// Subset of Cartesian axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Axes {
    /// Include x.
    pub x: bool,
    /// Include y.
    pub y: bool,
    /// Include z.
    pub z: bool,
}

impl Axes {
    /// The crystal plane, the default for temperatures.
    pub const XZ: Axes = Axes { x: true, y: false, z: true };
    /// All three axes.
    pub const XYZ: Axes = Axes { x: true, y: true, z: true };

    /// Single axis by index (0 = x).
    pub fn only(axis: usize) -> Axes {
        Axes { x: axis == 0, y: axis == 1, z: axis == 2 }
    }

    fn mask(&self) -> [bool; 3] {
        [self.x, self.y, self.z]
    }
}

/// Minimum samples for [`kinetic_temperature`].
pub const MIN_TEMPERATURE_SAMPLES: u64 = 100;

/// `m Σ⟨v²⟩ / (k_B n_axes)` over the chosen axes, K.
pub fn kinetic_temperature(summary: &TrajectorySummary, mass: f64, axes: Axes) -> Result<f64, ObservableError> {
    if summary.sample_count < MIN_TEMPERATURE_SAMPLES {
        return Err(ObservableError::InsufficientSamples {
            needed: MIN_TEMPERATURE_SAMPLES,
            got: summary.sample_count,
        });
    }
    let mask = axes.mask();
    let n = mask.iter().filter(|&&m| m).count().max(1) as f64;
    let sum: f64 = (0..3).filter(|&a| mask[a]).map(|a| summary.velocity_second_moments[a]).sum();
    Ok(mass * sum / (K_B * n))
}

/// Direction of the order-parameter change along increasing axis values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeDirection {
    /// dx grows through the crossing.
    Rising,
    /// dx shrinks through the crossing.
    Falling,
}

/// How a critical point was located.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrossingMethod {
    /// Half-way between the smoothed curve's minimum and maximum.
    HalfMaximum,
}

/// Location of a transition along a swept axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionEstimate {
    /// Axis value of the crossing.
    pub critical_value: f64,
    /// One-sigma uncertainty, axis units.
    pub uncertainty: f64,
    /// Rising or falling edge.
    pub direction: EdgeDirection,
    /// Locating rule.
    pub method: CrossingMethod,
}

/// Minimum grid points for transition detection.
pub const MIN_TRANSITION_POINTS: usize = 5;
/// Default ratio of dx range to its noise required to call a transition.
pub const DEFAULT_SIGNIFICANCE: f64 = 3.0;

/// 1-2-1 smoothing applied before crossing detection; ends use 2-1 weights.
pub fn smooth(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|i| match (i, n - 1 - i) {
            (0, _) => (2.0 * values[0] + values[1]) / 3.0,
            (_, 0) => (2.0 * values[i] + values[i - 1]) / 3.0,
            _ => 0.25 * values[i - 1] + 0.5 * values[i] + 0.25 * values[i + 1],
        })
        .collect()
}

/// Every half-maximum crossing of the 1-2-1 smoothed curve, in axis order.
///
/// `errors` are the standard errors of `means`; the curve's range must
/// exceed `significance` times their RMS.
pub fn detect_transitions(
    axis: &[f64],
    means: &[f64],
    errors: &[f64],
    significance: f64,
) -> Result<Vec<TransitionEstimate>, ObservableError> {
    let n = axis.len();
    if means.len() != n || errors.len() != n || axis.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(ObservableError::BadAxis);
    }
    if n < MIN_TRANSITION_POINTS {
        return Err(ObservableError::TooFewPoints(MIN_TRANSITION_POINTS));
    }
    let s = smooth(means);
    let (lo, hi) = s.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let range = hi - lo;
    let noise = libm::sqrt(errors.iter().map(|e| e * e).sum::<f64>() / n as f64);
    let threshold = significance * noise;
    if !(range > threshold) || !(range > 0.0) {
        return Err(ObservableError::NoTransition { range, threshold });
    }
    let half = 0.5 * (lo + hi);
    let mut out = Vec::new();
    for i in 0..n - 1 {
        let (a, b) = (s[i] - half, s[i + 1] - half);
        let direction = if a < 0.0 && b >= 0.0 {
            EdgeDirection::Rising
        } else if a >= 0.0 && b < 0.0 {
            EdgeDirection::Falling
        } else {
            continue;
        };
        let h = axis[i + 1] - axis[i];
        let frac = a / (a - b);
        let slope = (s[i + 1] - s[i]) / h;
        let local_err = errors[i].max(errors[i + 1]);
        let uncertainty = libm::sqrt(0.25 * h * h + (local_err / slope) * (local_err / slope));
        out.push(TransitionEstimate {
            critical_value: axis[i] + frac * h,
            uncertainty,
            direction,
            method: CrossingMethod::HalfMaximum,
        });
    }
    Ok(out)
}

/// The first half-maximum crossing; see [`detect_transitions`].
pub fn detect_transition(axis: &[f64], means: &[f64], errors: &[f64]) -> Result<TransitionEstimate, ObservableError> {
    let all = detect_transitions(axis, means, errors, DEFAULT_SIGNIFICANCE)?;
    all.first().copied().ok_or(ObservableError::NoTransition { range: 0.0, threshold: 0.0 })
}

/// First rising and last falling crossing of a window-shaped curve.
pub fn window_edges(crossings: &[TransitionEstimate]) -> (Option<TransitionEstimate>, Option<TransitionEstimate>) {
    let rise = crossings.iter().find(|c| c.direction == EdgeDirection::Rising).copied();
    let fall = crossings.iter().rev().find(|c| c.direction == EdgeDirection::Falling).copied();
    (rise, fall)
}

/// Ordinary least-squares line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    /// dy/dx.
    pub slope: f64,
    /// y at x = 0.
    pub intercept: f64,
    /// Coefficient of determination, clamped to [0, 1].
    pub r2: f64,
    /// Number of points.
    pub n: usize,
    /// Standard error of the slope.
    pub slope_stderr: f64,
    /// Residual standard deviation (n − 2 degrees of freedom).
    pub residual_std: f64,
    /// Mean of the xs.
    pub x_mean: f64,
    /// Σ (x − x̄)².
    pub sxx: f64,
}

impl LinearFit {
    /// Line value at `x`.
    pub fn predict(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }

    /// Standard error of the fitted line at `x`.
    pub fn prediction_stderr(&self, x: f64) -> f64 {
        let d = x - self.x_mean;
        self.residual_std * libm::sqrt(1.0 / self.n as f64 + d * d / self.sxx)
    }
}

/// Ordinary least squares on centred data.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit, ObservableError> {
    if xs.len() != ys.len() {
        return Err(ObservableError::BadAxis);
    }
    let n = xs.len();
    if n < 2 {
        return Err(ObservableError::DegenerateXs);
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if !(sxx > 0.0) {
        return Err(ObservableError::DegenerateXs);
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - (my + slope * (x - mx));
            r * r
        })
        .sum();
    let r2 = if syy > 0.0 { (1.0 - ss_res / syy).clamp(0.0, 1.0) } else { 1.0 };
    let residual_std = if n > 2 { libm::sqrt(ss_res / (nf - 2.0)) } else { 0.0 };
    Ok(LinearFit {
        slope,
        intercept,
        r2,
        n,
        slope_stderr: residual_std / libm::sqrt(sxx),
        residual_std,
        x_mean: mx,
        sxx,
    })
}

/// Simulated relation between bath heating and critical anisotropy.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationMap {
    /// Bath intensities simulated, in units of μ0.
    pub e_e_mu0: Vec<f64>,
    /// Critical anisotropy found at each.
    pub alpha_c: Vec<f64>,
    /// Uncertainty of each α_c.
    pub alpha_c_err: Vec<f64>,
    /// α_c = intercept + slope · E_e/μ0.
    pub fit: LinearFit,
}

/// Bath intensity inferred from a measured α_c.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BathEstimate {
    /// E_e / μ0.
    pub e_e_mu0: f64,
    /// One-sigma uncertainty in μ0.
    pub uncertainty_mu0: f64,
}

impl CalibrationMap {
    /// Fit the simulated points.
    pub fn new(e_e_mu0: Vec<f64>, alpha_c: Vec<f64>, alpha_c_err: Vec<f64>) -> Result<Self, ObservableError> {
        if alpha_c_err.len() != alpha_c.len() {
            return Err(ObservableError::BadAxis);
        }
        let fit = linear_fit(&e_e_mu0, &alpha_c)?;
        Ok(Self { e_e_mu0, alpha_c, alpha_c_err, fit })
    }

    /// Fitted line as E_e/μ0 = a·α_c + b (the inverse relation), `(a, b)`.
    pub fn inverse_line(&self) -> (f64, f64) {
        (1.0 / self.fit.slope, -self.fit.intercept / self.fit.slope)
    }

    /// Whether α_c decreases with E_e.
    pub fn is_decreasing(&self) -> bool {
        self.fit.slope < 0.0
    }

    fn scatter(&self) -> f64 {
        let n = self.alpha_c_err.len().max(1) as f64;
        let mean_err2 = self.alpha_c_err.iter().map(|e| e * e).sum::<f64>() / n;
        libm::sqrt((self.fit.residual_std * self.fit.residual_std).max(mean_err2))
    }

    /// α_c values covered by the map: the line over the simulated E_e range
    /// widened by two scatter units.
    pub fn alpha_range(&self) -> (f64, f64) {
        let (lo, hi) = self.e_e_mu0.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &e| (a.min(e), b.max(e)));
        let (p, q) = (self.fit.predict(lo), self.fit.predict(hi));
        let pad = 2.0 * self.scatter();
        (p.min(q) - pad, p.max(q) + pad)
    }

    /// Invert the line at a measured α_c with its uncertainty.
    pub fn invert(&self, alpha_c: f64, alpha_c_err: f64) -> Result<BathEstimate, ObservableError> {
        let (min, max) = self.alpha_range();
        if !(alpha_c >= min && alpha_c <= max) || self.fit.slope == 0.0 {
            return Err(ObservableError::OutOfCalibrationRange { alpha_c, min, max });
        }
        let e = (alpha_c - self.fit.intercept) / self.fit.slope;
        let d = e - self.fit.x_mean;
        let s = self.scatter();
        let line_err2 = s * s * (1.0 / self.fit.n as f64 + d * d / self.fit.sxx);
        let sigma = libm::sqrt(alpha_c_err * alpha_c_err + line_err2) / self.fit.slope.abs();
        Ok(BathEstimate { e_e_mu0: e, uncertainty_mu0: sigma })
    }
}

/// Number of groups in `values` when sorted values further apart than
/// `min_gap` start a new group.
pub fn cluster_count(values: &[f64], min_gap: f64) -> usize {
    if values.is_empty() {
        return 0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    1 + v.windows(2).filter(|w| w[1] - w[0] > min_gap).count()
}

/// Camera model for synthetic images. The view is along y: columns follow
/// z, rows follow x (top row = largest x), centred on the trap axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Optics {
    /// Object-space size of one pixel, m.
    pub pixel_pitch: f64,
    /// Gaussian point-spread σ, m.
    pub psf_sigma: f64,
    /// Expected counts per ion.
    pub photon_budget: f64,
    /// Columns.
    pub width: usize,
    /// Rows.
    pub height: usize,
}

impl Optics {
    /// 20 µm spans 15 pixels, 1-pixel PSF.
    pub fn standard(width: usize, height: usize, photon_budget: f64) -> Self {
        let pixel_pitch = 20e-6 / 15.0;
        Self { pixel_pitch, psf_sigma: pixel_pitch, photon_budget, width, height }
    }
}

/// Rendered image of expected counts.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    /// Columns.
    pub width: usize,
    /// Rows.
    pub height: usize,
    /// m per pixel in object space.
    pub pixel_pitch: f64,
    /// Row-major expected counts, `height × width`.
    pub intensities: Vec<f64>,
}

impl ImageGrid {
    /// Sum of all pixels.
    pub fn total(&self) -> f64 {
        self.intensities.iter().sum()
    }

    /// Intensity-weighted (column, row) centroid in pixel units.
    pub fn centroid(&self) -> (f64, f64) {
        let total = self.total();
        let (mut c, mut r) = (0.0, 0.0);
        for row in 0..self.height {
            for col in 0..self.width {
                let v = self.intensities[row * self.width + col];
                c += v * col as f64;
                r += v * row as f64;
            }
        }
        (c / total, r / total)
    }

    /// Pixel position of an object-space (x, z) point.
    pub fn pixel_of(&self, x: f64, z: f64) -> (f64, f64) {
        let col = z / self.pixel_pitch + 0.5 * (self.width as f64 - 1.0);
        let row = 0.5 * (self.height as f64 - 1.0) - x / self.pixel_pitch;
        (col, row)
    }
}

fn pixel_weights(n: usize, pitch: f64, center: f64, sigma: f64, flip: bool) -> Vec<f64> {
    let scale = 1.0 / (core::f64::consts::SQRT_2 * sigma);
    (0..n)
        .map(|k| {
            let c = if flip {
                (0.5 * (n as f64 - 1.0) - k as f64) * pitch
            } else {
                (k as f64 - 0.5 * (n as f64 - 1.0)) * pitch
            };
            let (a, b) = ((c - 0.5 * pitch - center) * scale, (c + 0.5 * pitch - center) * scale);
            0.5 * (libm::erf(b) - libm::erf(a))
        })
        .collect()
}

fn add_spot(image: &mut ImageGrid, x: f64, z: f64, sx: f64, sz: f64, weight: f64) -> Result<(), ObservableError> {
    let cols = pixel_weights(image.width, image.pixel_pitch, z, sz, false);
    let rows = pixel_weights(image.height, image.pixel_pitch, x, sx, true);
    let norm = cols.iter().sum::<f64>() * rows.iter().sum::<f64>();
    if !(norm > 1e-12) {
        return Err(ObservableError::OutsideFrame);
    }
    let w = weight / norm;
    for (r, ry) in rows.iter().enumerate() {
        if *ry == 0.0 {
            continue;
        }
        let row = &mut image.intensities[r * image.width..(r + 1) * image.width];
        for (px, cx) in row.iter_mut().zip(&cols) {
            *px += w * ry * cx;
        }
    }
    Ok(())
}

fn blank(optics: &Optics) -> ImageGrid {
    ImageGrid {
        width: optics.width,
        height: optics.height,
        pixel_pitch: optics.pixel_pitch,
        intensities: vec![0.0; optics.width * optics.height],
    }
}

/// Image of a trajectory: each ion a Gaussian at its mean (x, z) with its
/// sampled position spread added in quadrature to the PSF. Each spot is
/// normalized inside the frame, so the total equals `photon_budget × N`.
pub fn render_summary(summary: &TrajectorySummary, optics: &Optics) -> Result<ImageGrid, ObservableError> {
    if summary.mean_positions.is_empty() || summary.sample_count == 0 {
        return Err(ObservableError::EmptySamples);
    }
    let mut image = blank(optics);
    let psf2 = optics.psf_sigma * optics.psf_sigma;
    for (m, var) in summary.mean_positions.iter().zip(&summary.position_variances) {
        add_spot(&mut image, m.x, m.z, libm::sqrt(var.x + psf2), libm::sqrt(var.z + psf2), optics.photon_budget)?;
    }
    Ok(image)
}

/// Image of explicit snapshots: every ion of every snapshot convolved with
/// the PSF, each snapshot carrying `1/len` of the budget.
pub fn render_samples(samples: &[Vec<Vec3>], optics: &Optics) -> Result<ImageGrid, ObservableError> {
    if samples.is_empty() || samples.iter().all(|s| s.is_empty()) {
        return Err(ObservableError::EmptySamples);
    }
    let mut image = blank(optics);
    let weight = optics.photon_budget / samples.len() as f64;
    for snapshot in samples {
        for p in snapshot {
            add_spot(&mut image, p.x, p.z, optics.psf_sigma, optics.psf_sigma, weight)?;
        }
    }
    Ok(image)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn summary(positions: Vec<Vec3>, v2: Vec3, count: u64) -> TrajectorySummary {
        let n = positions.len();
        TrajectorySummary {
            mean_positions: positions,
            position_variances: vec![Vec3::zeros(); n],
            velocity_second_moments: v2,
            sample_count: count,
            order_samples: Vec::new(),
        }
    }

    #[test]
    fn straight_chain_has_zero_dx() {
        let p: Vec<Vec3> = (0..7).map(|i| Vec3::new(0.0, 0.0, i as f64)).collect();
        assert_eq!(order_parameter_dx(&p), 0.0);
    }

    #[test]
    fn temperatures() {
        let zero = summary(vec![Vec3::zeros()], Vec3::zeros(), 100);
        assert_eq!(kinetic_temperature(&zero, 1.0, Axes::XZ).unwrap(), 0.0);
        let few = summary(vec![Vec3::zeros()], Vec3::zeros(), 99);
        assert!(matches!(kinetic_temperature(&few, 1.0, Axes::XZ), Err(ObservableError::InsufficientSamples { .. })));
        let s = summary(vec![Vec3::zeros()], Vec3::new(1.0, 100.0, 3.0), 1000);
        assert_relative_eq!(kinetic_temperature(&s, K_B, Axes::XZ).unwrap(), 2.0);
        assert_relative_eq!(kinetic_temperature(&s, K_B, Axes::only(1)).unwrap(), 100.0);
    }

    #[test]
    fn step_transition() {
        let axis: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        let dx: Vec<f64> = axis.iter().map(|&x| if x < 5.0 { 0.0 } else { 10e-6 }).collect();
        let errs = vec![0.0; 10];
        let t = detect_transition(&axis, &dx, &errs).unwrap();
        assert!((t.critical_value - 5.0).abs() <= 1.0);
        assert_eq!(t.direction, EdgeDirection::Rising);
        assert!(t.uncertainty <= 1.0);
    }

    #[test]
    fn flat_curve_has_no_transition() {
        let axis: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let dx = vec![1e-6; 8];
        assert!(matches!(detect_transition(&axis, &dx, &[0.0; 8]), Err(ObservableError::NoTransition { .. })));
        let noisy: Vec<f64> = (0..8).map(|i| if i % 2 == 0 { 1e-7 } else { 0.0 }).collect();
        assert!(matches!(detect_transition(&axis, &noisy, &[1e-7; 8]), Err(ObservableError::NoTransition { .. })));
        assert_eq!(detect_transition(&axis[..4], &dx[..4], &[0.0; 4]), Err(ObservableError::TooFewPoints(5)));
    }

    #[test]
    fn window_curve_has_both_edges() {
        let axis: Vec<f64> = (0..25).map(|i| -120.0 + 5.0 * i as f64).collect();
        let dx: Vec<f64> = axis.iter().map(|&d| if (-85.0..-5.0).contains(&d) { 1.0 } else { 0.0 }).collect();
        let all = detect_transitions(&axis, &dx, &[0.01; 25], DEFAULT_SIGNIFICANCE).unwrap();
        let (rise, fall) = window_edges(&all);
        assert!((rise.unwrap().critical_value + 85.0).abs() <= 5.0);
        assert!((fall.unwrap().critical_value + 5.0).abs() <= 5.0);
    }

    #[test]
    fn exact_line() {
        let xs = [0.0, 1.0, 2.0, 3.5];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        let f = linear_fit(&xs, &ys).unwrap();
        assert_relative_eq!(f.slope, 2.0, epsilon = 1e-12);
        assert_relative_eq!(f.intercept, 1.0, epsilon = 1e-12);
        assert_eq!(f.r2, 1.0);
        assert_eq!(linear_fit(&[1.0, 1.0], &[0.0, 2.0]), Err(ObservableError::DegenerateXs));
    }

    #[test]
    fn published_lines_are_self_consistent() {
        let tc: f64 = -189.0 * 3.205 + 629.0;
        assert!((tc - 24.0).abs() <= 2.0);
        let ee: f64 = -176.3 * 3.279 + 591.0;
        assert!((ee - 13.0).abs() <= 0.8);
    }

    #[test]
    fn calibration_inverts_its_own_line() {
        let e = vec![5.0, 9.0, 13.0, 17.0, 21.0];
        let a: Vec<f64> = e.iter().map(|x| 3.35 - 0.005 * x).collect();
        let map = CalibrationMap::new(e, a, vec![0.002; 5]).unwrap();
        assert!(map.is_decreasing());
        let est = map.invert(3.35 - 0.005 * 13.0, 0.002).unwrap();
        assert_relative_eq!(est.e_e_mu0, 13.0, epsilon = 1e-9);
        assert!(est.uncertainty_mu0 > 0.0);
        assert!(matches!(map.invert(10.0, 0.0), Err(ObservableError::OutOfCalibrationRange { .. })));
        let (slope, intercept) = map.inverse_line();
        assert_relative_eq!(slope, -200.0, epsilon = 1e-6);
        assert_relative_eq!(intercept, 670.0, epsilon = 1e-6);
    }

    #[test]
    fn clusters() {
        assert_eq!(cluster_count(&[0.0, 0.01, 1.0, 1.02, 0.005], 0.5), 2);
        assert_eq!(cluster_count(&[0.0; 7], 0.5), 1);
        assert_eq!(cluster_count(&[], 0.5), 0);
    }

    #[test]
    fn single_ion_spot_centroid() {
        let optics = Optics::standard(64, 48, 1000.0);
        let (x, z) = (3.3e-6, -7.1e-6);
        let img = render_summary(&summary(vec![Vec3::new(x, 0.0, z)], Vec3::zeros(), 10), &optics).unwrap();
        let (c, r) = img.centroid();
        let (wc, wr) = img.pixel_of(x, z);
        assert!((c - wc).abs() < 0.1 && (r - wr).abs() < 0.1, "({c},{r}) vs ({wc},{wr})");
        assert_relative_eq!(img.total(), 1000.0, max_relative = 1e-12);
        assert!(render_samples(&[], &optics).is_err());
        let far = summary(vec![Vec3::new(0.0, 0.0, 1.0)], Vec3::zeros(), 10);
        assert_eq!(render_summary(&far, &optics), Err(ObservableError::OutsideFrame));
    }

    proptest! {
        #[test]
        fn dx_symmetries(
            pts in proptest::collection::vec((-1e-5f64..1e-5, -1e-6f64..1e-6, -3e-5f64..3e-5), 2..10),
            shift in (-1e-4f64..1e-4, -1e-4f64..1e-4, -1e-4f64..1e-4),
        ) {
            let p: Vec<Vec3> = pts.iter().map(|&(x, y, z)| Vec3::new(x, y, z)).collect();
            let dx = order_parameter_dx(&p);
            prop_assert!(dx >= 0.0);
            let moved: Vec<Vec3> = p.iter().map(|v| v + Vec3::new(shift.0, shift.1, shift.2)).collect();
            prop_assert!((order_parameter_dx(&moved) - dx).abs() <= 1e-12 * (1.0 + shift.0.abs() / 1e-5));
            let mirrored: Vec<Vec3> = p.iter().map(|v| Vec3::new(v.x, v.y, -v.z)).collect();
            prop_assert_eq!(order_parameter_dx(&mirrored), dx);
        }

        #[test]
        fn detection_is_shift_equivariant(edge in 2.5f64..7.5, shift in -50.0f64..50.0, width in 0.1f64..2.0) {
            let axis: Vec<f64> = (0..11).map(|i| i as f64).collect();
            let dx: Vec<f64> = axis.iter().map(|&x| 0.5 * (1.0 + libm::tanh((x - edge) / width))).collect();
            let errs = vec![0.01; 11];
            let a = detect_transition(&axis, &dx, &errs).unwrap();
            let moved: Vec<f64> = axis.iter().map(|x| x + shift).collect();
            let b = detect_transition(&moved, &dx, &errs).unwrap();
            prop_assert!((b.critical_value - a.critical_value - shift).abs() < 1e-9);
            prop_assert!(a.critical_value >= axis[0] && a.critical_value <= axis[10]);
        }

        #[test]
        fn fit_residuals_orthogonal(pts in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..30)) {
            let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
            prop_assume!(xs.iter().any(|&x| (x - xs[0]).abs() > 1e-3));
            let f = linear_fit(&xs, &ys).unwrap();
            let res: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| y - f.predict(*x)).collect();
            let scale: f64 = xs.iter().zip(&ys).map(|(x, y)| (x * y).abs()).sum::<f64>() + 1.0;
            let dot: f64 = res.iter().zip(&xs).map(|(r, x)| r * x).sum();
            let sum: f64 = res.iter().sum();
            prop_assert!(dot.abs() < 1e-10 * scale);
            prop_assert!(sum.abs() < 1e-10 * scale);
            prop_assert!((0.0..=1.0).contains(&f.r2));
        }

        #[test]
        fn image_flux_is_conserved(
            ions in proptest::collection::vec((-8e-6f64..8e-6, -2e-5f64..2e-5), 1..8),
            budget in 1.0f64..1e4,
        ) {
            let optics = Optics::standard(80, 40, budget);
            let p: Vec<Vec3> = ions.iter().map(|&(x, z)| Vec3::new(x, 0.0, z)).collect();
            let s = summary(p.clone(), Vec3::zeros(), 10);
            let img = render_summary(&s, &optics).unwrap();
            prop_assert!((img.total() - budget * p.len() as f64).abs() < 1e-9 * budget * p.len() as f64);
            prop_assert!(img.intensities.iter().all(|&v| v >= 0.0));
            let doubled = render_summary(&s, &Optics { photon_budget: 2.0 * budget, ..optics }).unwrap();
            for (a, b) in img.intensities.iter().zip(&doubled.intensities) {
                prop_assert!((b - 2.0 * a).abs() <= 1e-12 * b.abs().max(1e-300));
            }
            let snaps = render_samples(&[p.clone(), p], &optics).unwrap();
            prop_assert!((snaps.total() - img.total()).abs() < 1e-9 * img.total());
        }
    }
}
