//! 8-bit binary graymap output with a text sidecar for the scale bar.

use std::io::Write;
use std::path::{Path, PathBuf};

use zigzag_core::observables::{ImageGrid, Optics};
use zigzag_core::Vec3;

/// Scale bar length drawn by viewers, m.
pub const SCALE_BAR: f64 = 20e-6;

/// Encode as P5 (binary PGM), brightest pixel mapped to 255.
pub fn encode_pgm(image: &ImageGrid) -> Vec<u8> {
    let max = image.intensities.iter().copied().fold(0.0, f64::max);
    let mut out = Vec::with_capacity(image.intensities.len() + 32);
    write!(out, "P5\n{} {}\n255\n", image.width, image.height).expect("writing to a Vec cannot fail");
    out.extend(image.intensities.iter().map(|&v| {
        if max > 0.0 {
            (255.0 * v / max).round().clamp(0.0, 255.0) as u8
        } else {
            0
        }
    }));
    out
}

/// Decode a P5 file written by [`encode_pgm`]: `(width, height, pixels)`.
pub fn decode_pgm(bytes: &[u8]) -> Option<(usize, usize, Vec<u8>)> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).ok()?);
    }
    if fields[0] != "P5" || fields[3] != "255" {
        return None;
    }
    let (w, h): (usize, usize) = (fields[1].parse().ok()?, fields[2].parse().ok()?);
    let data = bytes.get(pos + 1..)?;
    (data.len() == w * h).then(|| (w, h, data.to_vec()))
}

/// Sidecar text: frame geometry and the scale bar in pixels.
pub fn sidecar(image: &ImageGrid) -> String {
    format!(
        "width_px = {}\nheight_px = {}\npixel_pitch_m = {:?}\nscale_bar_um = {}\nscale_bar_px = {:.3}\ntotal_counts = {:.6}\n",
        image.width,
        image.height,
        image.pixel_pitch,
        SCALE_BAR * 1e6,
        SCALE_BAR / image.pixel_pitch,
        image.total(),
    )
}

/// Sidecar path next to an image: `frame.pgm` → `frame.txt`.
pub fn sidecar_path(image_path: &Path) -> PathBuf {
    image_path.with_extension("txt")
}

/// Optics whose frame holds every ion with a margin. The standard pitch
/// (20 µm over 15 px) is kept when the crystal fits in `max_px` pixels;
/// smaller crystals are magnified so the longest extent spans ~`max_px / 2`.
pub fn fitted_optics(positions: &[Vec3], photon_budget: f64, max_px: usize) -> Optics {
    let standard = Optics::standard(max_px, max_px, photon_budget);
    let (mut ext_x, mut ext_z) = (0.0f64, 0.0f64);
    for p in positions {
        ext_x = ext_x.max(p.x.abs());
        ext_z = ext_z.max(p.z.abs());
    }
    let span = 2.0 * ext_x.max(ext_z);
    let mut pitch = standard.pixel_pitch;
    if span > 0.0 && span / pitch < 0.25 * max_px as f64 {
        pitch = span / (0.5 * max_px as f64);
    }
    let margin = 8.0;
    let size = |ext: f64| (((2.0 * ext / pitch) + 2.0 * margin).ceil() as usize).clamp(16, max_px);
    Optics { pixel_pitch: pitch, psf_sigma: pitch, photon_budget, width: size(ext_z), height: size(ext_x) }
}

/// Rows of ions seen by the camera: 1 when every mean x lies within `tol`
/// of the axis, otherwise the number of sides of the axis occupied by ions
/// displaced further than `tol`.
pub fn row_count(xs: &[f64], tol: f64) -> usize {
    let above = xs.iter().any(|&x| x > tol);
    let below = xs.iter().any(|&x| x < -tol);
    (above as usize + below as usize).max(1)
}
