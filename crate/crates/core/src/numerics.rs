//! Shared numeric kernels: a row-major `f64` grid, clipped-window statistics,
//! zero-padded cross-correlation, pooling, bilinear resampling and a seeded
//! random stream.
//!
//! Everything here works in `f64`; quantization happens only at image I/O.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{invalid, shape, LasqError, Result};

/// Dense row-major 2-D array of finite `f64` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2D {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Grid2D {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(invalid(format!("grid dimensions must be positive, got {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(shape(format!("grid data length {} does not match {rows}x{cols}", data.len())));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(LasqError::NonFinite(format!("grid entry {pos} is {}", data[pos])));
        }
        Ok(Self { rows, cols, data })
    }

    /// Grid with every entry equal to `value`.
    ///
    /// Panics on zero dimensions or a non-finite fill value.
    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        assert!(rows > 0 && cols > 0, "grid dimensions must be positive");
        assert!(value.is_finite(), "fill value must be finite");
        Self { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    /// Builds a grid by evaluating `f(row, col)`. Panics if `f` yields a non-finite value.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(rows > 0 && cols > 0, "grid dimensions must be positive");
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                let v = f(r, c);
                assert!(v.is_finite(), "from_fn produced non-finite value at ({r}, {c})");
                data.push(v);
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn same_shape(&self, other: &Grid2D) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Grid2D {
        Grid2D { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// Elementwise combination; panics on shape mismatch.
    pub fn zip_map(&self, other: &Grid2D, f: impl Fn(f64, f64) -> f64) -> Grid2D {
        assert!(self.same_shape(other), "zip_map shape mismatch");
        Grid2D {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn mean(&self) -> f64 {
        pairwise_sum(&self.data) / self.data.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Order-independent-enough summation with O(log n) error growth.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 16;
    if values.len() <= BLOCK {
        values.iter().sum()
    } else {
        let mid = values.len() / 2;
        pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
    }
}

/// Windowed sums of `x - shift` along one axis, window `[i-r, i+r]` clipped to `[0, n)`.
fn clipped_window_sums(line: &[f64], radius: usize, out: &mut [f64]) {
    let n = line.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for &v in line {
        acc += v;
        prefix.push(acc);
    }
    for (i, o) in out.iter_mut().enumerate() {
        let lo = i.saturating_sub(radius);
        let hi = (i + radius + 1).min(n);
        *o = prefix[hi] - prefix[lo];
    }
}

/// Separable clipped box sum of `x`.
fn box_sum(x: &Grid2D, radius: usize) -> Grid2D {
    let (rows, cols) = (x.rows, x.cols);
    let mut horiz = vec![0.0; rows * cols];
    for r in 0..rows {
        clipped_window_sums(&x.data[r * cols..(r + 1) * cols], radius, &mut horiz[r * cols..(r + 1) * cols]);
    }
    let mut out = vec![0.0; rows * cols];
    let mut column = vec![0.0; rows];
    let mut summed = vec![0.0; rows];
    for c in 0..cols {
        for r in 0..rows {
            column[r] = horiz[r * cols + c];
        }
        clipped_window_sums(&column, radius, &mut summed);
        for r in 0..rows {
            out[r * cols + c] = summed[r];
        }
    }
    Grid2D { rows, cols, data: out }
}

#[inline]
fn clipped_count(i: usize, radius: usize, n: usize) -> usize {
    (i + radius + 1).min(n) - i.saturating_sub(radius)
}

/// Windowed mean of `x` over `(2r+1)^2` windows clipped to the grid.
pub fn box_mean(x: &Grid2D, radius: usize) -> Grid2D {
    box_moments_inner(x, radius, false).0
}

/// Windowed mean and population variance over clipped `(2r+1)^2` windows.
///
/// Sums are accumulated relative to the first sample, so constant inputs give
/// the constant back exactly with zero variance. Variance is floored at zero.
pub fn box_moments(x: &Grid2D, radius: usize) -> (Grid2D, Grid2D) {
    let (mean, var) = box_moments_inner(x, radius, true);
    (mean, var.expect("variance requested"))
}

fn box_moments_inner(x: &Grid2D, radius: usize, with_var: bool) -> (Grid2D, Option<Grid2D>) {
    let shift = x.data[0];
    let centered = x.map(|v| v - shift);
    let sums = box_sum(&centered, radius);
    let sq_sums = with_var.then(|| box_sum(&centered.map(|v| v * v), radius));

    let (rows, cols) = (x.rows, x.cols);
    let mut mean = Vec::with_capacity(rows * cols);
    let mut var = Vec::with_capacity(if with_var { rows * cols } else { 0 });
    for r in 0..rows {
        let rc = clipped_count(r, radius, rows);
        for c in 0..cols {
            let n = (rc * clipped_count(c, radius, cols)) as f64;
            let m = sums.data[r * cols + c] / n;
            mean.push(shift + m);
            if let Some(sq) = &sq_sums {
                var.push((sq.data[r * cols + c] / n - m * m).max(0.0));
            }
        }
    }
    let mean = Grid2D { rows, cols, data: mean };
    let var = with_var.then_some(Grid2D { rows, cols, data: var });
    (mean, var)
}

/// Zero-padded cross-correlation with an odd-sized kernel; output has the size of `x`.
pub fn conv2d(x: &Grid2D, kernel: &Grid2D) -> Result<Grid2D> {
    if kernel.rows.is_multiple_of(2) || kernel.cols.is_multiple_of(2) {
        return Err(invalid(format!("kernel dimensions must be odd, got {}x{}", kernel.rows, kernel.cols)));
    }
    let (pr, pc) = ((kernel.rows / 2) as isize, (kernel.cols / 2) as isize);
    let (rows, cols) = (x.rows as isize, x.cols as isize);
    let mut out = Grid2D::zeros(x.rows, x.cols);
    for r in 0..rows {
        for c in 0..cols {
            let mut acc = 0.0;
            for u in 0..kernel.rows as isize {
                let sr = r + u - pr;
                if sr < 0 || sr >= rows {
                    continue;
                }
                for v in 0..kernel.cols as isize {
                    let sc = c + v - pc;
                    if sc < 0 || sc >= cols {
                        continue;
                    }
                    acc += kernel.get(u as usize, v as usize) * x.get(sr as usize, sc as usize);
                }
            }
            out.set(r as usize, c as usize, acc);
        }
    }
    Ok(out)
}

/// 2x2 average pooling; both dimensions must be even.
pub fn avg_pool2(x: &Grid2D) -> Result<Grid2D> {
    if !x.rows.is_multiple_of(2) || !x.cols.is_multiple_of(2) {
        return Err(invalid(format!("avg_pool2 needs even dimensions, got {}x{}", x.rows, x.cols)));
    }
    Ok(Grid2D::from_fn(x.rows / 2, x.cols / 2, |r, c| {
        let (r2, c2) = (2 * r, 2 * c);
        (x.get(r2, c2) + x.get(r2, c2 + 1) + x.get(r2 + 1, c2) + x.get(r2 + 1, c2 + 1)) * 0.25
    }))
}

/// Adjoint of [`avg_pool2`]: spreads each pooled gradient evenly over its 2x2 block.
pub fn avg_pool2_adjoint(grad: &Grid2D) -> Grid2D {
    Grid2D::from_fn(grad.rows * 2, grad.cols * 2, |r, c| grad.get(r / 2, c / 2) * 0.25)
}

/// Source taps `(i0, i1, w1)` for corner-aligned resampling of an axis from `n_in` to `n_out`.
fn resize_taps(n_in: usize, n_out: usize) -> Vec<(usize, usize, f64)> {
    (0..n_out)
        .map(|i| {
            let pos =
                if n_out == 1 { (n_in - 1) as f64 * 0.5 } else { i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64 };
            let i0 = (pos.floor() as usize).min(n_in - 1);
            let i1 = (i0 + 1).min(n_in - 1);
            (i0, i1, pos - i0 as f64)
        })
        .collect()
}

/// Bilinear resampling with corner-aligned sample positions.
pub fn bilinear_resize(x: &Grid2D, rows: usize, cols: usize) -> Result<Grid2D> {
    if rows == 0 || cols == 0 {
        return Err(invalid(format!("resize target must be positive, got {rows}x{cols}")));
    }
    let rt = resize_taps(x.rows, rows);
    let ct = resize_taps(x.cols, cols);
    Ok(Grid2D::from_fn(rows, cols, |r, c| {
        let (r0, r1, wr) = rt[r];
        let (c0, c1, wc) = ct[c];
        let top = x.get(r0, c0) * (1.0 - wc) + x.get(r0, c1) * wc;
        let bottom = x.get(r1, c0) * (1.0 - wc) + x.get(r1, c1) * wc;
        top * (1.0 - wr) + bottom * wr
    }))
}

/// Adjoint of [`bilinear_resize`] from `(in_rows, in_cols)` to the shape of `grad`.
pub fn bilinear_resize_adjoint(grad: &Grid2D, in_rows: usize, in_cols: usize) -> Grid2D {
    let rt = resize_taps(in_rows, grad.rows);
    let ct = resize_taps(in_cols, grad.cols);
    let mut out = Grid2D::zeros(in_rows, in_cols);
    for (r, &(r0, r1, wr)) in rt.iter().enumerate() {
        for (c, &(c0, c1, wc)) in ct.iter().enumerate() {
            let g = grad.get(r, c);
            out.data[r0 * in_cols + c0] += g * (1.0 - wr) * (1.0 - wc);
            out.data[r0 * in_cols + c1] += g * (1.0 - wr) * wc;
            out.data[r1 * in_cols + c0] += g * wr * (1.0 - wc);
            out.data[r1 * in_cols + c1] += g * wr * wc;
        }
    }
    out
}

/// Seeded, platform-independent random stream (ChaCha8 core).
///
/// Uniforms take the top 53 bits of a 64-bit draw; normals use the
/// Box-Muller transform, caching the second variate of each pair.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    core: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self { seed, core: ChaCha8Rng::seed_from_u64(seed), spare_normal: None }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child stream: same key, different ChaCha stream id.
    pub fn fork(&self, stream: u64) -> Rng {
        let mut core = ChaCha8Rng::seed_from_u64(self.seed);
        core.set_stream(stream.wrapping_add(1));
        Rng { seed: self.seed, core, spare_normal: None }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.core.next_u64()
    }

    /// Uniform in `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        // 1 - U lies in (0, 1], keeping ln finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = std::f64::consts::TAU * u2;
        self.spare_normal = Some(radius * angle.sin());
        radius * angle.cos()
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }
}

pub fn draw_uniform(rng: &mut Rng) -> f64 {
    rng.uniform()
}

pub fn draw_normal(rng: &mut Rng) -> f64 {
    rng.normal()
}
