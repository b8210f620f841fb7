//! Illumination estimation: a self-guided filter over the Y channel and
//! regional luminance statistics.

use crate::error::{invalid, Result};
use crate::numerics::{box_moments, Grid2D};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuidedFilterParams {
    /// Window half-width in pixels.
    pub radius: usize,
    /// Regularizer on the local variance (intensity squared units).
    pub eps: f64,
}

impl Default for GuidedFilterParams {
    fn default() -> Self {
        Self { radius: 8, eps: 0.01 }
    }
}

impl GuidedFilterParams {
    pub fn new(radius: usize, eps: f64) -> Result<Self> {
        let p = Self { radius, eps };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.radius < 1 {
            return Err(invalid("guided filter radius must be >= 1"));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(invalid(format!("guided filter eps must be positive, got {}", self.eps)));
        }
        Ok(())
    }
}

/// Smoothed illumination map `G`, every entry in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LuminanceMap(Grid2D);

impl LuminanceMap {
    /// Wraps a grid after checking that every value lies in `[0, 1]`.
    pub fn new(grid: Grid2D) -> Result<Self> {
        if grid.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(invalid("luminance values must lie in [0, 1]"));
        }
        Ok(Self(grid))
    }

    pub fn grid(&self) -> &Grid2D {
        &self.0
    }

    pub fn into_grid(self) -> Grid2D {
        self.0
    }

    pub fn rows(&self) -> usize {
        self.0.rows()
    }

    pub fn cols(&self) -> usize {
        self.0.cols()
    }
}

/// Self-guided filter: `a = var / (var + eps)`, `b = mean * (1 - a)`,
/// `G = mean(a) * y + mean(b)` with every window mean taken at the same radius.
pub fn guided_filter_luminance(y: &Grid2D, params: &GuidedFilterParams) -> Result<LuminanceMap> {
    params.validate()?;
    if y.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(invalid("luminance channel must lie in [0, 1]"));
    }
    let (mean, var) = box_moments(y, params.radius);
    let a = var.map(|s| s / (s + params.eps));
    let b = mean.zip_map(&a, |m, a| m * (1.0 - a));
    let (a_bar, _) = box_moments(&a, params.radius);
    let (b_bar, _) = box_moments(&b, params.radius);
    let mut g = y.zip_map(&a_bar, |l, a| a * l);
    for (out, &bb) in g.data_mut().iter_mut().zip(b_bar.data()) {
        *out = (*out + bb).clamp(0.0, 1.0);
    }
    Ok(LuminanceMap(g))
}

/// Half-open pixel rectangle `[row_start, row_end) x [col_start, col_end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Region {
    pub row_start: usize,
    pub row_end: usize,
    pub col_start: usize,
    pub col_end: usize,
}

impl Region {
    pub fn new(row_start: usize, row_end: usize, col_start: usize, col_end: usize) -> Self {
        Self { row_start, row_end, col_start, col_end }
    }

    pub fn full(rows: usize, cols: usize) -> Self {
        Self::new(0, rows, 0, cols)
    }

    pub fn is_empty(&self) -> bool {
        self.row_start >= self.row_end || self.col_start >= self.col_end
    }

    pub fn area(&self) -> usize {
        if self.is_empty() {
            0
        } else {
            (self.row_end - self.row_start) * (self.col_end - self.col_start)
        }
    }

    pub fn contains(&self, r: usize, c: usize) -> bool {
        (self.row_start..self.row_end).contains(&r) && (self.col_start..self.col_end).contains(&c)
    }

    pub fn check_within(&self, rows: usize, cols: usize) -> Result<()> {
        if self.is_empty() {
            return Err(invalid(format!("empty region {self:?}")));
        }
        if self.row_end > rows || self.col_end > cols {
            return Err(invalid(format!("region {self:?} exceeds {rows}x{cols} image")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionStats {
    /// Regional luminance scalar (arithmetic mean of `G`).
    pub g_p: f64,
    /// Population variance of `G` over the region.
    pub var_g: f64,
}

pub fn region_stats(g: &LuminanceMap, p: &Region) -> Result<RegionStats> {
    p.check_within(g.rows(), g.cols())?;
    let grid = g.grid();
    let n = p.area() as f64;
    let mut sum = 0.0;
    for r in p.row_start..p.row_end {
        for c in p.col_start..p.col_end {
            sum += grid.get(r, c);
        }
    }
    let mean = sum / n;
    let mut sq = 0.0;
    for r in p.row_start..p.row_end {
        for c in p.col_start..p.col_end {
            let d = grid.get(r, c) - mean;
            sq += d * d;
        }
    }
    Ok(RegionStats { g_p: mean.clamp(0.0, 1.0), var_g: (sq / n).clamp(0.0, 0.25) })
}
