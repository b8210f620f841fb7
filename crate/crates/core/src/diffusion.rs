//! Hierarchically guided forward process, reverse and implicit sampling steps,
//! the step-to-level mapping and the training losses.
//!
//! A forward step pulls the latent toward the current guide:
//! `x_t = (sqrt(1 - beta_t) - tau_t) x_{t-1} + tau_t f + sqrt(beta_t) eps`.
//! Its moments are available two ways: iterating that recursion exactly, and
//! the published closed form with weights
//! `w_{t,s} = sqrt(abar_t) tau_s sqrt(1 - abar_{s-1}) / sqrt(abar_s)`.
//! The two agree when `tau = 0`; for `tau > 0` they generally do not, and
//! callers should treat the closed form as a reported quantity only.

use crate::error::{invalid, shape, LasqError, Result};
use crate::imageio::Image;
use crate::numerics::{pairwise_sum, Grid2D, Rng};

/// `channels` planes of `rows x cols`, stored plane after plane.
#[derive(Debug, Clone, PartialEq)]
pub struct Latent {
    channels: usize,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Latent {
    pub fn new(channels: usize, rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || rows == 0 || cols == 0 {
            return Err(invalid(format!("latent dimensions must be positive, got {channels}x{rows}x{cols}")));
        }
        if data.len() != channels * rows * cols {
            return Err(shape(format!(
                "latent {channels}x{rows}x{cols} needs {} values, got {}",
                channels * rows * cols,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(LasqError::NonFinite(format!("latent entry {i}")));
        }
        Ok(Self { channels, rows, cols, data })
    }

    pub fn filled(channels: usize, rows: usize, cols: usize, value: f64) -> Self {
        Self { channels, rows, cols, data: vec![value; channels * rows * cols] }
    }

    pub fn zeros(channels: usize, rows: usize, cols: usize) -> Self {
        Self::filled(channels, rows, cols, 0.0)
    }

    pub fn zeros_like(other: &Latent) -> Self {
        Self::zeros(other.channels, other.rows, other.cols)
    }

    /// Independent standard-normal entries.
    pub fn standard_normal(channels: usize, rows: usize, cols: usize, rng: &mut Rng) -> Self {
        let data = (0..channels * rows * cols).map(|_| rng.normal()).collect();
        Self { channels, rows, cols, data }
    }

    pub fn from_planes(planes: &[Grid2D]) -> Result<Self> {
        let first = planes.first().ok_or_else(|| invalid("latent needs at least one plane"))?;
        if planes.iter().any(|p| !p.same_shape(first)) {
            return Err(shape("latent planes differ in shape"));
        }
        let data = planes.iter().flat_map(|p| p.data().iter().copied()).collect();
        Ok(Self { channels: planes.len(), rows: first.rows(), cols: first.cols(), data })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn plane(&self, k: usize) -> &[f64] {
        let n = self.rows * self.cols;
        &self.data[k * n..(k + 1) * n]
    }

    pub fn plane_grid(&self, k: usize) -> Grid2D {
        Grid2D::new(self.rows, self.cols, self.plane(k).to_vec()).expect("plane shape is consistent")
    }

    pub fn planes(&self) -> Vec<Grid2D> {
        (0..self.channels).map(|k| self.plane_grid(k)).collect()
    }

    pub fn same_shape(&self, other: &Latent) -> bool {
        self.channels == other.channels && self.rows == other.rows && self.cols == other.cols
    }

    fn with_data(&self, data: Vec<f64>) -> Latent {
        Latent { channels: self.channels, rows: self.rows, cols: self.cols, data }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Latent {
        self.with_data(self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Latent, f: impl Fn(f64, f64) -> f64) -> Result<Latent> {
        check_shapes(self, other)?;
        Ok(self.with_data(self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect()))
    }

    pub fn mean(&self) -> f64 {
        pairwise_sum(&self.data) / self.data.len() as f64
    }
}

fn check_shapes(a: &Latent, b: &Latent) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(shape(format!(
            "latent shapes differ: {}x{}x{} vs {}x{}x{}",
            a.channels, a.rows, a.cols, b.channels, b.rows, b.cols
        )))
    }
}

/// Guidance weights `tau_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TauSchedule {
    /// `tau_t = max * (1 - t/T)`: strongest on the early, coarse steps.
    Linear {
        max: f64,
    },
    Constant(f64),
}

impl Default for TauSchedule {
    fn default() -> Self {
        TauSchedule::Linear { max: 0.05 }
    }
}

impl TauSchedule {
    pub fn value(&self, t: usize, t_steps: usize) -> f64 {
        match *self {
            TauSchedule::Linear { max } => max * (1.0 - t as f64 / t_steps as f64),
            TauSchedule::Constant(v) => v,
        }
    }
}

impl std::str::FromStr for TauSchedule {
    type Err = String;

    /// Accepts `linear:<max>`, `constant:<v>` or a bare number (constant).
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("bad tau value '{v}': {e}"));
        match s.split_once(':') {
            Some(("linear", v)) => Ok(TauSchedule::Linear { max: num(v)? }),
            Some(("constant", v)) => Ok(TauSchedule::Constant(num(v)?)),
            Some((kind, _)) => Err(format!("unknown tau schedule '{kind}' (expected linear or constant)")),
            None => Ok(TauSchedule::Constant(num(s)?)),
        }
    }
}

impl std::fmt::Display for TauSchedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TauSchedule::Linear { max } => write!(f, "linear:{max}"),
            TauSchedule::Constant(v) => write!(f, "constant:{v}"),
        }
    }
}

/// Rounding used by the step-to-level mapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PsiRounding {
    /// `max(1, floor(t N / T))`
    #[default]
    Floor,
    /// `ceil(t N / T)`
    Ceil,
}

impl std::str::FromStr for PsiRounding {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "floor" => Ok(PsiRounding::Floor),
            "ceil" => Ok(PsiRounding::Ceil),
            other => Err(format!("unknown psi rounding '{other}' (expected floor or ceil)")),
        }
    }
}

impl std::fmt::Display for PsiRounding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PsiRounding::Floor => "floor",
            PsiRounding::Ceil => "ceil",
        })
    }
}

/// Maps step `t` in `1..=T` to a hierarchy level in `1..=N`.
pub fn psi(t: usize, t_total: usize, n_levels: usize, rounding: PsiRounding) -> Result<usize> {
    if n_levels == 0 || n_levels > t_total {
        return Err(invalid(format!("need 1 <= N <= T, got N={n_levels}, T={t_total}")));
    }
    if t == 0 || t > t_total {
        return Err(invalid(format!("step {t} outside 1..={t_total}")));
    }
    let num = t * n_levels;
    let level = match rounding {
        PsiRounding::Floor => num / t_total,
        PsiRounding::Ceil => num.div_ceil(t_total),
    };
    Ok(level.clamp(1, n_levels))
}

/// Per-step coefficients, indexed from 1 like the steps themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSchedule {
    beta: Vec<f64>,
    alpha_bar: Vec<f64>,
    tau: Vec<f64>,
    psi_rounding: PsiRounding,
}

impl DiffusionSchedule {
    pub fn new(beta: Vec<f64>, tau: Vec<f64>, psi_rounding: PsiRounding) -> Result<Self> {
        if beta.is_empty() {
            return Err(invalid("schedule needs at least one step"));
        }
        if beta.len() != tau.len() {
            return Err(shape(format!("{} betas but {} taus", beta.len(), tau.len())));
        }
        for (i, (&b, &t)) in beta.iter().zip(&tau).enumerate() {
            if !(b > 0.0 && b < 1.0) {
                return Err(invalid(format!("beta_{} = {b} outside (0, 1)", i + 1)));
            }
            if !(t >= 0.0 && t <= (1.0 - b).sqrt()) {
                return Err(invalid(format!("tau_{} = {t} outside [0, sqrt(1 - beta)]", i + 1)));
            }
        }
        let mut alpha_bar = Vec::with_capacity(beta.len());
        let mut acc = 1.0;
        for &b in &beta {
            let next = acc * (1.0 - b);
            if !(next < acc && next > 0.0) {
                return Err(invalid("cumulative alpha product is not strictly decreasing"));
            }
            acc = next;
            alpha_bar.push(acc);
        }
        Ok(Self { beta, alpha_bar, tau, psi_rounding })
    }

    /// Linear betas from `beta_start` to `beta_end` over `t_steps` steps.
    pub fn linear(
        t_steps: usize,
        beta_start: f64,
        beta_end: f64,
        tau: TauSchedule,
        psi_rounding: PsiRounding,
    ) -> Result<Self> {
        if t_steps == 0 {
            return Err(invalid("T must be positive"));
        }
        let beta = (1..=t_steps)
            .map(|t| {
                if t_steps == 1 {
                    beta_start
                } else {
                    beta_start + (beta_end - beta_start) * (t - 1) as f64 / (t_steps - 1) as f64
                }
            })
            .collect();
        let taus = (1..=t_steps).map(|t| tau.value(t, t_steps)).collect();
        Self::new(beta, taus, psi_rounding)
    }

    pub fn t_steps(&self) -> usize {
        self.beta.len()
    }

    pub fn psi_rounding(&self) -> PsiRounding {
        self.psi_rounding
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t - 1]
    }

    /// Cumulative product up to `t`; `alpha_bar(0) = 1`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bar[t - 1]
        }
    }

    pub fn tau(&self, t: usize) -> f64 {
        self.tau[t - 1]
    }

    /// Recursion coefficient `sqrt(1 - beta_t) - tau_t`.
    pub fn coefficient(&self, t: usize) -> f64 {
        (1.0 - self.beta(t)).sqrt() - self.tau(t)
    }

    pub fn level(&self, t: usize, n_levels: usize) -> Result<usize> {
        psi(t, self.t_steps(), n_levels, self.psi_rounding)
    }

    fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.t_steps() {
            return Err(invalid(format!("step {t} outside 1..={}", self.t_steps())));
        }
        Ok(())
    }
}

/// Gaussian moments of `x_t`: per-element mean, isotropic variance.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginal {
    pub mean: Latent,
    pub var: f64,
}

fn check_guides(x0: &Latent, guides: &[Latent]) -> Result<()> {
    if guides.is_empty() {
        return Err(invalid("no guide levels supplied"));
    }
    guides.iter().try_for_each(|g| check_shapes(x0, g))
}

/// One guided forward transition.
pub fn forward_step(
    x_prev: &Latent,
    f_guide: &Latent,
    t: usize,
    sched: &DiffusionSchedule,
    rng: &mut Rng,
) -> Result<Latent> {
    check_shapes(x_prev, f_guide)?;
    sched.check_step(t)?;
    let c = sched.coefficient(t);
    let tau = sched.tau(t);
    let sd = sched.beta(t).sqrt();
    let data = x_prev.data.iter().zip(&f_guide.data).map(|(&x, &f)| c * x + tau * f + sd * rng.normal()).collect();
    Ok(x_prev.with_data(data))
}

/// Draws `x_1, ..., x_t` by iterating [`forward_step`] with `guides[psi(s) - 1]`.
pub fn forward_trajectory(
    x0: &Latent,
    guides: &[Latent],
    t: usize,
    sched: &DiffusionSchedule,
    rng: &mut Rng,
) -> Result<Vec<Latent>> {
    check_guides(x0, guides)?;
    sched.check_step(t)?;
    let mut out = Vec::with_capacity(t);
    let mut x = x0.clone();
    for s in 1..=t {
        let g = &guides[sched.level(s, guides.len())? - 1];
        x = forward_step(&x, g, s, sched, rng)?;
        out.push(x.clone());
    }
    Ok(out)
}

/// Unguided marginal `N(sqrt(abar_t) x0, (1 - abar_t) I)`.
pub fn ddpm_marginal(x0: &Latent, t: usize, sched: &DiffusionSchedule) -> Result<Marginal> {
    sched.check_step(t)?;
    let ab = sched.alpha_bar(t);
    Ok(Marginal { mean: x0.map(|v| ab.sqrt() * v), var: 1.0 - ab })
}

/// Closed-form marginal with weights `w_{t,s}` summed against `guides[psi(s) - 1] - x0`.
pub fn forward_marginal_closed(
    x0: &Latent,
    guides: &[Latent],
    t: usize,
    sched: &DiffusionSchedule,
) -> Result<Marginal> {
    check_guides(x0, guides)?;
    sched.check_step(t)?;
    let ab_t = sched.alpha_bar(t);
    let mut mean = x0.map(|v| ab_t.sqrt() * v);
    for s in 1..=t {
        let w = ab_t.sqrt() * sched.tau(s) * (1.0 - sched.alpha_bar(s - 1)).sqrt() / sched.alpha_bar(s).sqrt();
        if w == 0.0 {
            continue;
        }
        let g = &guides[sched.level(s, guides.len())? - 1];
        for ((m, &f), &x) in mean.data.iter_mut().zip(&g.data).zip(&x0.data) {
            *m += w * (f - x);
        }
    }
    Ok(Marginal { mean, var: 1.0 - ab_t })
}

/// Exact moments of the forward recursion:
/// `m_t = c_t m_{t-1} + tau_t f`, `v_t = c_t^2 v_{t-1} + beta_t`.
pub fn forward_marginal_exact(x0: &Latent, guides: &[Latent], t: usize, sched: &DiffusionSchedule) -> Result<Marginal> {
    check_guides(x0, guides)?;
    sched.check_step(t)?;
    let mut mean = x0.clone();
    let mut var = 0.0;
    for s in 1..=t {
        let c = sched.coefficient(s);
        let tau = sched.tau(s);
        let g = &guides[sched.level(s, guides.len())? - 1];
        for (m, &f) in mean.data.iter_mut().zip(&g.data) {
            *m = c * *m + tau * f;
        }
        var = c * c * var + sched.beta(s);
    }
    Ok(Marginal { mean, var })
}

/// Per-element Monte-Carlo moments of `x_t` with standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMoments {
    pub t: usize,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub se_mean: Vec<f64>,
    pub se_var: Vec<f64>,
}

/// Simulates `runs` independent trajectories up to `t_max` and summarizes
/// every step. Run `i` draws from `rng.fork(i)`, and reductions are pairwise,
/// so the result does not depend on evaluation order.
pub fn monte_carlo_moments(
    x0: &Latent,
    guides: &[Latent],
    t_max: usize,
    sched: &DiffusionSchedule,
    runs: usize,
    rng: &Rng,
) -> Result<Vec<SampleMoments>> {
    if runs < 2 {
        return Err(invalid("Monte-Carlo needs at least two runs"));
    }
    check_guides(x0, guides)?;
    sched.check_step(t_max)?;
    let n = x0.len();
    // samples[(t-1) * n + e][run]
    let mut samples = vec![Vec::with_capacity(runs); t_max * n];
    for run in 0..runs {
        let mut r = rng.fork(run as u64);
        for (s, x) in forward_trajectory(x0, guides, t_max, sched, &mut r)?.iter().enumerate() {
            for (e, &v) in x.data.iter().enumerate() {
                samples[s * n + e].push(v);
            }
        }
    }
    let nf = runs as f64;
    let mut out = Vec::with_capacity(t_max);
    for t in 1..=t_max {
        let mut m = SampleMoments { t, mean: vec![], var: vec![], se_mean: vec![], se_var: vec![] };
        for e in 0..n {
            let xs = &samples[(t - 1) * n + e];
            let mu = pairwise_sum(xs) / nf;
            let dev2: Vec<f64> = xs.iter().map(|x| (x - mu).powi(2)).collect();
            let dev4: Vec<f64> = dev2.iter().map(|d| d * d).collect();
            let m2 = pairwise_sum(&dev2) / nf;
            let m4 = pairwise_sum(&dev4) / nf;
            let var = m2 * nf / (nf - 1.0);
            m.mean.push(mu);
            m.var.push(var);
            m.se_mean.push((var / nf).sqrt());
            m.se_var.push(((m4 - m2 * m2).max(0.0) / nf).sqrt());
        }
        out.push(m);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SigmaMode {
    /// `sigma_t = sqrt(beta_t)` with fresh noise.
    #[default]
    Ancestral,
    /// `sigma_t = 0`; the generator is not touched.
    Deterministic,
}

/// `x_{t-1} = (x_t - beta_t eps_hat) / sqrt(1 - beta_t) + sigma_t b`.
pub fn reverse_step(
    x_t: &Latent,
    eps_hat: &Latent,
    t: usize,
    sched: &DiffusionSchedule,
    mode: SigmaMode,
    rng: &mut Rng,
) -> Result<Latent> {
    check_shapes(x_t, eps_hat)?;
    sched.check_step(t)?;
    let b = sched.beta(t);
    let scale = 1.0 / (1.0 - b).sqrt();
    let mut out = x_t.zip_map(eps_hat, |x, e| scale * (x - b * e))?;
    if mode == SigmaMode::Ancestral {
        let sigma = b.sqrt();
        for v in out.data.iter_mut() {
            *v += sigma * rng.normal();
        }
    }
    Ok(out)
}

/// `x0_hat = (x_t - sqrt(1 - abar_t) eps_hat) / sqrt(abar_t)`.
pub fn predict_x0(x_t: &Latent, eps_hat: &Latent, t: usize, sched: &DiffusionSchedule) -> Result<Latent> {
    sched.check_step(t)?;
    let ab = sched.alpha_bar(t);
    x_t.zip_map(eps_hat, |x, e| (x - (1.0 - ab).sqrt() * e) / ab.sqrt())
}

/// Deterministic implicit step from `t` to `t_prev < t` (`t_prev = 0` returns
/// the predicted clean latent). `clamp` optionally bounds the prediction.
pub fn ddim_step(
    x_t: &Latent,
    eps_hat: &Latent,
    t: usize,
    t_prev: usize,
    sched: &DiffusionSchedule,
    clamp: Option<(f64, f64)>,
) -> Result<Latent> {
    if t_prev >= t {
        return Err(invalid(format!("implicit step needs t_prev < t, got {t_prev} >= {t}")));
    }
    let mut x0 = predict_x0(x_t, eps_hat, t, sched)?;
    if let Some((lo, hi)) = clamp {
        x0 = x0.map(|v| v.clamp(lo, hi));
    }
    let ab = sched.alpha_bar(t_prev);
    x0.zip_map(eps_hat, |x, e| ab.sqrt() * x + (1.0 - ab).sqrt() * e)
}

/// Mean squared error over all elements.
pub fn loss_d(eps_true: &Latent, eps_hat: &Latent) -> Result<f64> {
    check_shapes(eps_true, eps_hat)?;
    let sq: Vec<f64> = eps_true.data.iter().zip(&eps_hat.data).map(|(a, b)| (a - b).powi(2)).collect();
    Ok(pairwise_sum(&sq) / sq.len() as f64)
}

/// Mean absolute error over all channel values.
pub fn loss_g(decoded_a: &Image, decoded_b: &Image) -> Result<f64> {
    if !decoded_a.same_shape(decoded_b) {
        return Err(shape("decoded images differ in shape"));
    }
    let abs: Vec<f64> = decoded_a.data().iter().zip(decoded_b.data()).map(|(a, b)| (a - b).abs()).collect();
    Ok(pairwise_sum(&abs) / abs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;
    use proptest::prelude::*;

    fn vec4(v: [f64; 4]) -> Latent {
        Latent::new(1, 1, 4, v.to_vec()).unwrap()
    }

    fn sched(t: usize, tau: TauSchedule) -> DiffusionSchedule {
        DiffusionSchedule::linear(t, 1e-4, 0.02, tau, PsiRounding::Floor).unwrap()
    }

    fn max_diff(a: &Latent, b: &Latent) -> f64 {
        a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn psi_examples() {
        assert_eq!(psi(1000, 1000, 100, PsiRounding::Floor).unwrap(), 100);
        assert_eq!(psi(10, 1000, 100, PsiRounding::Floor).unwrap(), 1);
        assert_eq!(psi(5, 1000, 100, PsiRounding::Floor).unwrap(), 1);
        assert_eq!(psi(11, 1000, 100, PsiRounding::Ceil).unwrap(), 2);
        assert_eq!(psi(19, 1000, 100, PsiRounding::Floor).unwrap(), 1);
        assert!(psi(1, 4, 5, PsiRounding::Floor).is_err());
        assert!(psi(0, 4, 2, PsiRounding::Floor).is_err());
    }

    #[test]
    fn psi_is_monotone_and_onto_top_level() {
        for rounding in [PsiRounding::Floor, PsiRounding::Ceil] {
            let levels: Vec<usize> = (1..=37).map(|t| psi(t, 37, 6, rounding).unwrap()).collect();
            assert!(levels.windows(2).all(|w| w[0] <= w[1]));
            assert_eq!(*levels.last().unwrap(), 6);
            assert_eq!(levels[0], 1);
        }
    }

    #[test]
    fn schedule_invariants() {
        let s = sched(16, TauSchedule::default());
        let mut acc = 1.0;
        for t in 1..=16 {
            acc *= 1.0 - s.beta(t);
            assert!((s.alpha_bar(t) - acc).abs() < 1e-12);
            assert!(s.alpha_bar(t) < s.alpha_bar(t - 1));
            assert!(s.tau(t) >= 0.0 && s.tau(t) <= (1.0 - s.beta(t)).sqrt());
        }
        assert_eq!(s.beta(1), 1e-4);
        assert!((s.beta(16) - 0.02).abs() < 1e-15);
        assert_eq!(s.tau(16), 0.0);
        assert!((s.tau(8) - 0.025).abs() < 1e-15);
    }

    #[test]
    fn schedule_validation() {
        assert!(DiffusionSchedule::new(vec![0.0], vec![0.0], PsiRounding::Floor).is_err());
        assert!(DiffusionSchedule::new(vec![0.1], vec![0.99], PsiRounding::Floor).is_err());
        assert!(DiffusionSchedule::new(vec![0.1, 0.2], vec![0.0], PsiRounding::Floor).is_err());
        assert!(DiffusionSchedule::linear(0, 1e-4, 0.02, TauSchedule::Constant(0.0), PsiRounding::Floor).is_err());
    }

    #[test]
    fn tau_schedule_parsing() {
        assert_eq!("linear:0.05".parse::<TauSchedule>().unwrap(), TauSchedule::Linear { max: 0.05 });
        assert_eq!("0".parse::<TauSchedule>().unwrap(), TauSchedule::Constant(0.0));
        assert_eq!("constant:0.1".parse::<TauSchedule>().unwrap(), TauSchedule::Constant(0.1));
        assert!("cosine:1".parse::<TauSchedule>().is_err());
        let t = TauSchedule::Linear { max: 0.05 };
        assert_eq!(t.to_string().parse::<TauSchedule>().unwrap(), t);
    }

    #[test]
    fn forward_step_without_guidance_or_noise() {
        let s = DiffusionSchedule::new(vec![1e-12], vec![0.0], PsiRounding::Floor).unwrap();
        let x = vec4([0.1, -0.5, 0.3, 2.0]);
        let out = forward_step(&x, &vec4([9.0; 4]), 1, &s, &mut Rng::new(1)).unwrap();
        assert!(max_diff(&out, &x) < 1e-5);
    }

    #[test]
    fn forward_step_matches_formula() {
        let s = sched(4, TauSchedule::Constant(0.1));
        let x = vec4([0.1, 0.4, 0.6, 0.9]);
        let f = vec4([0.3, 0.3, 0.8, 1.0]);
        let out = forward_step(&x, &f, 3, &s, &mut Rng::new(7)).unwrap();
        let mut rng = Rng::new(7);
        for i in 0..4 {
            let e = rng.normal();
            let expected = ((1.0 - s.beta(3)).sqrt() - 0.1) * x.data()[i] + 0.1 * f.data()[i] + s.beta(3).sqrt() * e;
            assert!((out.data()[i] - expected).abs() < 1e-15);
        }
        // zero shift: guide equal to the state leaves only sqrt(1 - beta) scaling
        let same = forward_step(&x, &x, 3, &s, &mut Rng::new(7)).unwrap();
        let mut rng = Rng::new(7);
        for i in 0..4 {
            let expected = (1.0 - s.beta(3)).sqrt() * x.data()[i] + s.beta(3).sqrt() * rng.normal();
            assert!((same.data()[i] - expected).abs() < 1e-15);
        }
        assert!(forward_step(&x, &Latent::zeros(1, 2, 2), 1, &s, &mut Rng::new(0)).is_err());
    }

    #[test]
    fn unguided_marginals_coincide() {
        let s = sched(16, TauSchedule::Constant(0.0));
        let x0 = vec4([0.1, 0.4, 0.6, 0.9]);
        let guides: Vec<Latent> = (0..4).map(|n| x0.map(|v| v + 0.1 * n as f64)).collect();
        for t in 1..=16 {
            let d = ddpm_marginal(&x0, t, &s).unwrap();
            let c = forward_marginal_closed(&x0, &guides, t, &s).unwrap();
            let e = forward_marginal_exact(&x0, &guides, t, &s).unwrap();
            assert!(max_diff(&d.mean, &c.mean) < 1e-12 && max_diff(&d.mean, &e.mean) < 1e-12);
            assert!((d.var - c.var).abs() < 1e-12 && (d.var - e.var).abs() < 1e-12);
        }
    }

    #[test]
    fn first_step_moments() {
        let s = sched(4, TauSchedule::Constant(0.1));
        let x0 = vec4([0.1, 0.4, 0.6, 0.9]);
        let guides = vec![vec4([1.0, 0.0, 0.5, 0.2])];
        let c = forward_marginal_closed(&x0, &guides, 1, &s).unwrap();
        let ab1 = s.alpha_bar(1);
        for i in 0..4 {
            assert!((c.mean.data()[i] - ab1.sqrt() * x0.data()[i]).abs() < 1e-15);
        }
        let e = forward_marginal_exact(&x0, &guides, 1, &s).unwrap();
        for i in 0..4 {
            let expected = ((1.0 - s.beta(1)).sqrt() - 0.1) * x0.data()[i] + 0.1 * guides[0].data()[i];
            assert!((e.mean.data()[i] - expected).abs() < 1e-15);
        }
        assert!((e.var - s.beta(1)).abs() < 1e-18);
    }

    #[test]
    fn exact_moments_match_monte_carlo() {
        let s = sched(4, TauSchedule::Constant(0.05));
        let x0 = vec4([0.1, 0.4, 0.6, 0.9]);
        let guides: Vec<Latent> = (1..=2).map(|n| x0.map(|v| v + 0.1 * n as f64)).collect();
        let mc = monte_carlo_moments(&x0, &guides, 4, &s, 20_000, &Rng::new(5)).unwrap();
        for m in &mc {
            let e = forward_marginal_exact(&x0, &guides, m.t, &s).unwrap();
            for i in 0..4 {
                assert!((m.mean[i] - e.mean.data()[i]).abs() < 4.0 * m.se_mean[i]);
                assert!((m.var[i] - e.var).abs() < 4.0 * m.se_var[i]);
            }
        }
    }

    #[test]
    fn reverse_step_examples() {
        let s = sched(4, TauSchedule::Constant(0.0));
        let x = vec4([0.2, -1.0, 0.5, 3.0]);
        let zero = Latent::zeros_like(&x);
        let out = reverse_step(&x, &zero, 2, &s, SigmaMode::Deterministic, &mut Rng::new(0)).unwrap();
        for i in 0..4 {
            assert!((out.data()[i] - x.data()[i] / (1.0 - s.beta(2)).sqrt()).abs() < 1e-15);
        }
        // substituting the true noise of one forward step
        let mut rng = Rng::new(8);
        let eps = Latent::standard_normal(1, 1, 4, &mut rng);
        let b = s.beta(3);
        let xt = x.zip_map(&eps, |v, e| (1.0 - b).sqrt() * v + b.sqrt() * e).unwrap();
        let back = reverse_step(&xt, &eps, 3, &s, SigmaMode::Deterministic, &mut rng).unwrap();
        for i in 0..4 {
            let expected = x.data()[i] + (b.sqrt() - b) * eps.data()[i] / (1.0 - b).sqrt();
            assert!((back.data()[i] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn ancestral_reverse_is_seeded() {
        let s = sched(4, TauSchedule::Constant(0.0));
        let x = vec4([0.2, -1.0, 0.5, 3.0]);
        let e = vec4([0.1, 0.1, -0.2, 0.0]);
        let a = reverse_step(&x, &e, 4, &s, SigmaMode::Ancestral, &mut Rng::new(3)).unwrap();
        let b = reverse_step(&x, &e, 4, &s, SigmaMode::Ancestral, &mut Rng::new(3)).unwrap();
        assert_eq!(a, b);
        let d = reverse_step(&x, &e, 4, &s, SigmaMode::Deterministic, &mut Rng::new(3)).unwrap();
        assert!(max_diff(&a, &d) > 0.0);
    }

    #[test]
    fn ddim_inverts_single_jump() {
        let s = sched(16, TauSchedule::Constant(0.0));
        let mut rng = Rng::new(4);
        let x0 = Latent::standard_normal(3, 2, 2, &mut rng);
        let eps = Latent::standard_normal(3, 2, 2, &mut rng);
        for t in [1, 7, 16] {
            let ab = s.alpha_bar(t);
            let xt = x0.zip_map(&eps, |x, e| ab.sqrt() * x + (1.0 - ab).sqrt() * e).unwrap();
            let rec = ddim_step(&xt, &eps, t, 0, &s, None).unwrap();
            assert!(max_diff(&rec, &x0) < 1e-10);
            let mid = ddim_step(&xt, &eps, t, t / 2, &s, None).unwrap();
            let abp = s.alpha_bar(t / 2);
            let expected = x0.zip_map(&eps, |x, e| abp.sqrt() * x + (1.0 - abp).sqrt() * e).unwrap();
            assert!(max_diff(&mid, &expected) < 1e-10);
        }
        assert!(ddim_step(&x0, &eps, 3, 3, &s, None).is_err());
    }

    #[test]
    fn two_step_ddim_with_linear_denoiser() {
        // eps_hat = a x, unrolled by hand for one element
        let s = sched(10, TauSchedule::Constant(0.0));
        let a = 0.3;
        let x10 = 1.7;
        let (ab10, ab5) = (s.alpha_bar(10), s.alpha_bar(5));
        let x5 = ab5.sqrt() * (x10 - (1.0 - ab10).sqrt() * a * x10) / ab10.sqrt() + (1.0 - ab5).sqrt() * a * x10;
        let x0 = (x5 - (1.0 - ab5).sqrt() * a * x5) / ab5.sqrt();

        let start = Latent::filled(1, 1, 1, x10);
        let step1 = ddim_step(&start, &start.map(|v| a * v), 10, 5, &s, None).unwrap();
        let step2 = ddim_step(&step1, &step1.map(|v| a * v), 5, 0, &s, None).unwrap();
        assert!((step1.data()[0] - x5).abs() < 1e-10);
        assert!((step2.data()[0] - x0).abs() < 1e-10);
    }

    #[test]
    fn ddim_clamp_bounds_prediction() {
        let s = sched(4, TauSchedule::Constant(0.0));
        let x = vec4([5.0, -5.0, 0.5, 0.0]);
        let zero = Latent::zeros_like(&x);
        let out = ddim_step(&x, &zero, 2, 0, &s, Some((0.0, 1.0))).unwrap();
        assert_eq!(out.data(), &[1.0, 0.0, 0.5 / s.alpha_bar(2).sqrt(), 0.0]);
    }

    #[test]
    fn loss_examples() {
        let a = vec4([0.1, 0.2, 0.3, 0.4]);
        assert_eq!(loss_d(&a, &a).unwrap(), 0.0);
        let img = Image::from_fn(3, 3, |r, c| [0.1 * r as f64, 0.1 * c as f64, 0.5]);
        let shifted = Image::from_fn(3, 3, |r, c| [0.1 * r as f64 + 0.1, 0.1 * c as f64 + 0.1, 0.6]);
        assert!((loss_g(&shifted, &img).unwrap() - 0.1).abs() < 1e-12);
        assert!(loss_d(&a, &Latent::zeros(1, 2, 2)).is_err());
        assert!(loss_g(&img, &Image::filled(2, 3, 0.0)).is_err());
    }

    #[test]
    fn losses_match_loops() {
        let mut rng = Rng::new(9);
        let a = Latent::standard_normal(1, 1, 8, &mut rng);
        let b = Latent::standard_normal(1, 1, 8, &mut rng);
        let mut sq = 0.0;
        for i in 0..8 {
            sq += (a.data()[i] - b.data()[i]) * (a.data()[i] - b.data()[i]);
        }
        assert!((loss_d(&a, &b).unwrap() - sq / 8.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn exact_variance_stays_in_unit_interval(t_steps in 1usize..40, tau in 0.0f64..0.9, seed in any::<u64>()) {
            let s = sched(t_steps, TauSchedule::Constant(tau));
            let x0 = Latent::standard_normal(1, 2, 2, &mut Rng::new(seed));
            for t in 1..=t_steps {
                let v = forward_marginal_exact(&x0, std::slice::from_ref(&x0), t, &s).unwrap().var;
                prop_assert!(v > 0.0 && v <= 1.0);
            }
        }

        #[test]
        fn closed_and_exact_agree_without_guidance(t_steps in 1usize..30, seed in any::<u64>()) {
            let s = sched(t_steps, TauSchedule::Constant(0.0));
            let mut rng = Rng::new(seed);
            let x0 = Latent::standard_normal(2, 2, 3, &mut rng);
            let g = vec![Latent::standard_normal(2, 2, 3, &mut rng)];
            let t = t_steps;
            let c = forward_marginal_closed(&x0, &g, t, &s).unwrap();
            let e = forward_marginal_exact(&x0, &g, t, &s).unwrap();
            prop_assert!(max_diff(&c.mean, &e.mean) < 1e-12);
            prop_assert!((c.var - e.var).abs() < 1e-12);
        }

        #[test]
        fn loss_d_is_symmetric_and_nonnegative(seed in any::<u64>()) {
            let mut rng = Rng::new(seed);
            let a = Latent::standard_normal(3, 2, 2, &mut rng);
            let b = Latent::standard_normal(3, 2, 2, &mut rng);
            let l = loss_d(&a, &b).unwrap();
            prop_assert!(l >= 0.0);
            prop_assert_eq!(l, loss_d(&b, &a).unwrap());
        }
    }
}
