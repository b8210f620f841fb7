//! Luminance adaptation operators: the regional exponent
//! `gamma = (alpha + G_P) ^ (2 G_P - 1 + eta * var / (var + delta))`,
//! its per-pixel distribution bounds, and patchwise application.

use crate::error::{invalid, Result};
use crate::imageio::{rgb_to_yuv, yuv_to_rgb, Image};
use crate::luminance::{LuminanceMap, Region};
use crate::numerics::Grid2D;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaoParams {
    /// Base offset added to the regional luminance.
    pub alpha: f64,
    /// Contrast gain on the variance term.
    pub eta: f64,
    /// Variance regularizer.
    pub delta: f64,
}

impl Default for LaoParams {
    fn default() -> Self {
        Self { alpha: 0.15, eta: 1.0, delta: 0.01 }
    }
}

impl LaoParams {
    pub fn new(alpha: f64, eta: f64, delta: f64) -> Result<Self> {
        let p = Self { alpha, eta, delta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(invalid(format!("lao alpha must be positive, got {}", self.alpha)));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(invalid(format!("lao eta must be non-negative, got {}", self.eta)));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(invalid(format!("lao delta must be positive, got {}", self.delta)));
        }
        Ok(())
    }
}

pub fn compute_beta(g_p: f64, var_g: f64, params: &LaoParams) -> f64 {
    2.0 * g_p - 1.0 + params.eta * var_g / (var_g + params.delta)
}

pub fn compute_gamma(g_p: f64, var_g: f64, params: &LaoParams) -> f64 {
    (params.alpha + g_p).powf(compute_beta(g_p, var_g, params))
}

/// Per-pixel exponents (each pixel a 1x1 region) with their range and mean.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaMap {
    pub grid: Grid2D,
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub gamma_0: f64,
}

impl GammaMap {
    /// Population standard deviation of the per-pixel exponents.
    pub fn std_dev(&self) -> f64 {
        let n = self.grid.len() as f64;
        let ss: f64 = self.grid.data().iter().map(|g| (g - self.gamma_0).powi(2)).sum();
        (ss / n).sqrt()
    }
}

pub fn pixel_gamma_map(g: &LuminanceMap, params: &LaoParams) -> GammaMap {
    let grid = g.grid().map(|v| compute_gamma(v, 0.0, params));
    let gamma_min = grid.min();
    let gamma_max = grid.max();
    // the float mean can drift by an ulp past the extremes
    let gamma_0 = grid.mean().clamp(gamma_min, gamma_max);
    GammaMap { grid, gamma_min, gamma_max, gamma_0 }
}

/// How an exponent is applied to a pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ApplyMode {
    /// `v -> v^(1/gamma)` on each of R, G and B.
    #[default]
    Rgb,
    /// Same curve on the Y channel only, then back to RGB.
    Luma,
}

impl std::str::FromStr for ApplyMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "rgb" => Ok(ApplyMode::Rgb),
            "luma" | "y" => Ok(ApplyMode::Luma),
            other => Err(format!("unknown apply mode '{other}' (expected rgb or luma)")),
        }
    }
}

impl std::fmt::Display for ApplyMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ApplyMode::Rgb => "rgb",
            ApplyMode::Luma => "luma",
        })
    }
}

#[inline]
fn adapt(v: f64, inv_gamma: f64) -> f64 {
    v.powf(inv_gamma).clamp(0.0, 1.0)
}

/// Replaces every channel value `v` inside `p` with `v^(1/gamma)`.
pub fn apply_lao(img: &Image, p: &Region, gamma: f64) -> Result<Image> {
    let mut out = img.clone();
    apply_lao_in_place(&mut out, p, gamma, ApplyMode::Rgb)?;
    Ok(out)
}

pub fn apply_lao_with_mode(img: &Image, p: &Region, gamma: f64, mode: ApplyMode) -> Result<Image> {
    let mut out = img.clone();
    apply_lao_in_place(&mut out, p, gamma, mode)?;
    Ok(out)
}

pub(crate) fn apply_lao_in_place(img: &mut Image, p: &Region, gamma: f64, mode: ApplyMode) -> Result<()> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(invalid(format!("gamma must be positive and finite, got {gamma}")));
    }
    p.check_within(img.rows(), img.cols())?;
    if gamma == 1.0 {
        return Ok(());
    }
    let inv = 1.0 / gamma;
    match mode {
        ApplyMode::Rgb => {
            for r in p.row_start..p.row_end {
                for c in p.col_start..p.col_end {
                    let px = img.pixel(r, c);
                    img.set_pixel(r, c, px.map(|v| adapt(v, inv)));
                }
            }
        }
        ApplyMode::Luma => {
            let (mut y, u, v) = rgb_to_yuv(img);
            for r in p.row_start..p.row_end {
                for c in p.col_start..p.col_end {
                    y.set(r, c, adapt(y.get(r, c), inv));
                }
            }
            let recon = yuv_to_rgb(&y, &u, &v)?;
            for r in p.row_start..p.row_end {
                for c in p.col_start..p.col_end {
                    img.set_pixel(r, c, recon.pixel(r, c));
                }
            }
        }
    }
    Ok(())
}
