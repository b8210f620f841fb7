//! Luminance-variation analysis over paired low/normal-light images.
//!
//! Every pixel gives a point `(x, y)` of Y values. Each interior point lies on
//! exactly one curve `y = x^kappa` through `(1, 1)`, so `kappa = ln y / ln x`.

use crate::error::{invalid, shape, Result};
use crate::imageio::{rgb_to_yuv, Image};

/// Default exclusion margin, roughly one 8-bit code value.
pub const DEFAULT_CLIP_EPS: f64 = 0.004;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LvPoint {
    /// Low-light luminance.
    pub x: f64,
    /// Normal-light luminance.
    pub y: f64,
}

pub fn lv_points(low: &Image, normal: &Image) -> Result<Vec<LvPoint>> {
    if !low.same_shape(normal) {
        return Err(shape(format!(
            "low image is {}x{} but normal image is {}x{}",
            low.rows(),
            low.cols(),
            normal.rows(),
            normal.cols()
        )));
    }
    let (yl, _, _) = rgb_to_yuv(low);
    let (yn, _, _) = rgb_to_yuv(normal);
    Ok(yl.data().iter().zip(yn.data()).map(|(&x, &y)| LvPoint { x: x.clamp(0.0, 1.0), y: y.clamp(0.0, 1.0) }).collect())
}

/// Exponent of the unit-anchored power curve through `p`, or `None` when
/// either coordinate falls outside `[clip_eps, 1 - clip_eps]`.
pub fn estimate_kappa(p: &LvPoint, clip_eps: f64) -> Option<f64> {
    let interior = |v: f64| v >= clip_eps && v <= 1.0 - clip_eps;
    if !(interior(p.x) && interior(p.y)) {
        return None;
    }
    let kappa = p.y.ln() / p.x.ln();
    kappa.is_finite().then_some(kappa)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KappaHistogram {
    /// `bins + 1` ascending edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KappaSummary {
    pub histogram: KappaHistogram,
    /// `(q, kappa_q)` in the order requested. `kappa_q` is nondecreasing in
    /// `q`; a larger exponent means a flatter brightening curve.
    pub quantiles: Vec<(f64, f64)>,
    pub valid_points: usize,
}

/// Linear-interpolation empirical quantile on sorted data.
pub fn empirical_quantile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn kappa_summary(points: &[LvPoint], clip_eps: f64, bins: usize, quantiles: &[f64]) -> Result<KappaSummary> {
    if bins == 0 {
        return Err(invalid("histogram needs at least one bin"));
    }
    if let Some(q) = quantiles.iter().find(|q| !(**q > 0.0 && **q < 1.0)) {
        return Err(invalid(format!("quantile {q} outside (0, 1)")));
    }
    let mut kappas: Vec<f64> = points.iter().filter_map(|p| estimate_kappa(p, clip_eps)).collect();
    if kappas.is_empty() {
        return Err(invalid("no points inside the clipping margin"));
    }
    kappas.sort_by(f64::total_cmp);
    let (lo, hi) = (kappas[0], kappas[kappas.len() - 1]);
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| lo + i as f64 * width).collect();
    let mut counts = vec![0usize; bins];
    for &k in &kappas {
        let idx = (((k - lo) / width) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    let quantiles = quantiles.iter().map(|&q| (q, empirical_quantile(&kappas, q))).collect();
    Ok(KappaSummary { histogram: KappaHistogram { edges, counts }, quantiles, valid_points: kappas.len() })
}

/// Point on the representative curve `y = x^kappa`.
pub fn curve_value(kappa: f64, x: f64) -> f64 {
    x.powf(kappa)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    fn gray_ramp(rows: usize, cols: usize) -> Image {
        Image::from_fn(rows, cols, |r, c| [(r * cols + c + 1) as f64 / (rows * cols + 2) as f64; 3])
    }

    fn powered(img: &Image, kappa: f64) -> Image {
        Image::from_fn(img.rows(), img.cols(), |r, c| img.pixel(r, c).map(|v| v.powf(kappa)))
    }

    #[test]
    fn identical_images_sit_on_diagonal() {
        let img = gray_ramp(5, 5);
        let pts = lv_points(&img, &img).unwrap();
        assert!(pts.iter().all(|p| p.x == p.y));
    }

    #[test]
    fn points_match_pixel_luma() {
        let low = Image::from_fn(2, 2, |r, c| [0.1 * (r + 1) as f64, 0.2 * (c + 1) as f64, 0.05]);
        let normal = Image::from_fn(2, 2, |r, c| [0.3, 0.1 * (r + c) as f64, 0.9]);
        let pts = lv_points(&low, &normal).unwrap();
        assert_eq!(pts.len(), 4);
        for r in 0..2 {
            for c in 0..2 {
                let l = low.pixel(r, c);
                let n = normal.pixel(r, c);
                let p = pts[r * 2 + c];
                assert!((p.x - (0.299 * l[0] + 0.587 * l[1] + 0.114 * l[2])).abs() < 1e-15);
                assert!((p.y - (0.299 * n[0] + 0.587 * n[1] + 0.114 * n[2])).abs() < 1e-15);
            }
        }
        assert!(lv_points(&low, &gray_ramp(3, 2)).is_err());
    }

    #[test]
    fn kappa_examples() {
        assert!((estimate_kappa(&LvPoint { x: 0.25, y: 0.5 }, 0.004).unwrap() - 0.5).abs() < 1e-15);
        assert!((estimate_kappa(&LvPoint { x: 0.7, y: 0.7 }, 0.004).unwrap() - 1.0).abs() < 1e-15);
        let k = estimate_kappa(&LvPoint { x: 0.01, y: 0.3 }, 0.005).unwrap();
        assert!((k - 0.261_439_373_5).abs() < 1e-9, "{k}");
        assert_eq!(estimate_kappa(&LvPoint { x: 0.001, y: 0.3 }, 0.004), None);
        assert_eq!(estimate_kappa(&LvPoint { x: 0.5, y: 0.999 }, 0.004), None);
    }

    #[test]
    fn exclusion_rule_is_exact() {
        let mut rng = Rng::new(12);
        let eps = 0.05;
        let pts: Vec<LvPoint> = (0..2000).map(|_| LvPoint { x: rng.uniform(), y: rng.uniform() }).collect();
        for p in &pts {
            let inside = (eps..=1.0 - eps).contains(&p.x) && (eps..=1.0 - eps).contains(&p.y);
            assert_eq!(estimate_kappa(p, eps).is_some(), inside);
        }
    }

    #[test]
    fn synthetic_power_law_is_recovered() {
        let low = gray_ramp(16, 16);
        let normal = powered(&low, 0.5);
        let pts = lv_points(&low, &normal).unwrap();
        for p in &pts {
            if let Some(k) = estimate_kappa(p, DEFAULT_CLIP_EPS) {
                assert!((k - 0.5).abs() < 1e-10);
            }
        }
        let s = kappa_summary(&pts, DEFAULT_CLIP_EPS, 8, &[0.1, 0.5, 0.9]).unwrap();
        assert!(s.quantiles.iter().all(|&(_, k)| (k - 0.5).abs() < 1e-10));
        assert_eq!(s.histogram.counts.iter().sum::<usize>(), s.valid_points);
    }

    #[test]
    fn two_curve_quantiles() {
        let mut pts = Vec::new();
        for i in 1..=50 {
            let x = i as f64 / 52.0;
            pts.push(LvPoint { x, y: x.powf(0.3) });
            pts.push(LvPoint { x, y: x.powf(0.8) });
        }
        let s = kappa_summary(&pts, 1e-3, 10, &[0.25, 0.5, 0.75]).unwrap();
        assert!((s.quantiles[0].1 - 0.3).abs() < 1e-10);
        assert!(s.quantiles[1].1 > 0.3 && s.quantiles[1].1 < 0.8);
        assert!((s.quantiles[2].1 - 0.8).abs() < 1e-10);
        assert_eq!(s.histogram.counts.iter().sum::<usize>(), 100);
        assert_eq!(s.histogram.counts[0], 50);
        assert_eq!(s.histogram.counts[9], 50);
    }

    #[test]
    fn summary_errors() {
        let pts = vec![LvPoint { x: 0.0, y: 1.0 }];
        assert!(kappa_summary(&pts, 0.004, 4, &[0.5]).is_err());
        let ok = vec![LvPoint { x: 0.5, y: 0.5 }];
        assert!(kappa_summary(&ok, 0.004, 0, &[0.5]).is_err());
        assert!(kappa_summary(&ok, 0.004, 4, &[1.0]).is_err());
    }

    #[test]
    fn curves_pass_through_unit_corner() {
        for k in [0.2, 0.5, 1.0, 3.0] {
            assert_eq!(curve_value(k, 1.0), 1.0);
        }
    }
}
