//! Seeded synthetic scenes and gamma darkening for desk-scale benchmarks.

use crate::imageio::Image;
use crate::numerics::Rng;

/// Smooth colour scene: a tilted ramp plus a few soft blobs, mapped into
/// `[0.05, 0.95]`.
pub fn synthetic_scene(rows: usize, cols: usize, rng: &mut Rng) -> Image {
    let tint = [0.7 + 0.3 * rng.uniform(), 0.7 + 0.3 * rng.uniform(), 0.7 + 0.3 * rng.uniform()];
    let (gr, gc) = (rng.uniform() - 0.5, rng.uniform() - 0.5);
    let base = 0.35 + 0.3 * rng.uniform();
    let blobs: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| (rng.uniform(), rng.uniform(), 0.08 + 0.2 * rng.uniform(), 0.6 * (rng.uniform() - 0.4)))
        .collect();
    Image::from_fn(rows, cols, |r, c| {
        let (u, v) = (r as f64 / rows as f64, c as f64 / cols as f64);
        let mut s = base + gr * (u - 0.5) + gc * (v - 0.5);
        for &(br, bc, rad, amp) in &blobs {
            let d2 = (u - br).powi(2) + (v - bc).powi(2);
            s += amp * (-d2 / (2.0 * rad * rad)).exp();
        }
        tint.map(|t| (s * t).clamp(0.05, 0.95))
    })
}

/// `v -> v^power` on every channel.
pub fn darken(img: &Image, power: f64) -> Image {
    Image::from_fn(img.rows(), img.cols(), |r, c| img.pixel(r, c).map(|v| v.powf(power)))
}
