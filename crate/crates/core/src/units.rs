//! Conversion between ordinary frequencies in MHz (used in config text and
//! reports) and angular frequencies in rad/s (used everywhere internally).
//!
//! This is the only place the factor 2π·10⁶ appears. The inverse is chosen
//! so that `mhz_to_angular(angular_to_mhz(w)) == w` bit for bit whenever `w`
//! itself came from `mhz_to_angular`.

use core::f64::consts::PI;

const ANGULAR_PER_MHZ: f64 = 2.0 * PI * 1e6;

/// MHz (ordinary) → rad/s.
pub fn mhz_to_angular(f_mhz: f64) -> f64 {
    f_mhz * ANGULAR_PER_MHZ
}

/// rad/s → MHz (ordinary), picking the neighbouring double that maps back
/// exactly when one exists.
pub fn angular_to_mhz(omega: f64) -> f64 {
    exact_quotient(omega, ANGULAR_PER_MHZ)
}

/// `value / scale`, nudged by a few ulps so that multiplying back by `scale`
/// reproduces `value` exactly when such a double exists.
pub fn exact_quotient(value: f64, scale: f64) -> f64 {
    let guess = value / scale;
    if !guess.is_finite() || guess * scale == value {
        return guess;
    }
    let mut down = guess;
    let mut up = guess;
    for _ in 0..4 {
        down = down.next_down();
        up = up.next_up();
        if down * scale == value {
            return down;
        }
        if up * scale == value {
            return up;
        }
    }
    guess
}

/// Snap an angular frequency onto the set of values reachable from a MHz
/// literal, so that serialising and re-reading it is lossless.
pub fn snap_angular(omega: f64) -> f64 {
    mhz_to_angular(angular_to_mhz(omega))
}
