//! Full-reference quality metrics: PSNR over RGB and single-scale SSIM on luma.

use crate::error::{invalid, shape, Result};
use crate::imageio::{rgb_to_yuv, Image};
use crate::numerics::{pairwise_sum, Grid2D};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    /// `f64::INFINITY` for identical inputs.
    pub psnr_db: f64,
    pub ssim: f64,
}

fn check_pair(a: &Image, b: &Image) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(shape(format!("{}x{} vs {}x{} images", a.rows(), a.cols(), b.rows(), b.cols())))
    }
}

/// Mean squared error over all channel values.
pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    check_pair(a, b)?;
    let sq: Vec<f64> = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).collect();
    Ok(pairwise_sum(&sq) / sq.len() as f64)
}

/// `10 log10(1 / MSE)` for unit peak; infinite when the images match.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    let m = mse(a, b)?;
    Ok(if m == 0.0 { f64::INFINITY } else { -10.0 * m.log10() })
}

/// Normalised 1-D Gaussian taps; their outer product is the 2-D window.
fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let half = (SSIM_WINDOW / 2) as f64;
    let mut taps = [0.0; SSIM_WINDOW];
    for (i, t) in taps.iter_mut().enumerate() {
        let d = i as f64 - half;
        *t = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let sum: f64 = taps.iter().sum();
    taps.map(|t| t / sum)
}

/// Weighted mean of every fully contained window ("valid" filtering).
fn filter_valid(x: &Grid2D, taps: &[f64; SSIM_WINDOW]) -> Grid2D {
    let (rows, cols) = (x.rows() - SSIM_WINDOW + 1, x.cols() - SSIM_WINDOW + 1);
    let horiz = Grid2D::from_fn(x.rows(), cols, |r, c| taps.iter().enumerate().map(|(k, w)| w * x.get(r, c + k)).sum());
    Grid2D::from_fn(rows, cols, |r, c| taps.iter().enumerate().map(|(k, w)| w * horiz.get(r + k, c)).sum())
}

/// Mean SSIM over all valid 11x11 Gaussian windows of the Y channel.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    check_pair(a, b)?;
    if a.rows() < SSIM_WINDOW || a.cols() < SSIM_WINDOW {
        return Err(invalid(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let (ya, _, _) = rgb_to_yuv(a);
    let (yb, _, _) = rgb_to_yuv(b);
    let taps = gaussian_taps();
    let mu_a = filter_valid(&ya, &taps);
    let mu_b = filter_valid(&yb, &taps);
    let e_aa = filter_valid(&ya.zip_map(&ya, |x, y| x * y), &taps);
    let e_bb = filter_valid(&yb.zip_map(&yb, |x, y| x * y), &taps);
    let e_ab = filter_valid(&ya.zip_map(&yb, |x, y| x * y), &taps);
    let map: Vec<f64> = (0..mu_a.len())
        .map(|i| {
            let (ma, mb) = (mu_a.data()[i], mu_b.data()[i]);
            let va = e_aa.data()[i] - ma * ma;
            let vb = e_bb.data()[i] - mb * mb;
            let cov = e_ab.data()[i] - ma * mb;
            ((2.0 * ma * mb + C1) * (2.0 * cov + C2)) / ((ma * ma + mb * mb + C1) * (va + vb + C2))
        })
        .collect();
    Ok(pairwise_sum(&map) / map.len() as f64)
}

pub fn evaluate(a: &Image, b: &Image) -> Result<MetricReport> {
    Ok(MetricReport { psnr_db: psnr(a, b)?, ssim: ssim(a, b)? })
}
