//! Truncated-Gaussian operator distribution and the Metropolis-Hastings chain
//! that draws hierarchical operator sets.
//!
//! The chain proposes from a Gaussian centred on the current state and
//! truncated to the support, so proposals are asymmetric near the bounds. The
//! acceptance ratio therefore carries the Hastings correction
//! `q(current | proposal) / q(proposal | current)`, which reduces to the ratio
//! of the proposal normalizers `Z(current) / Z(proposal)`.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

use statrs::function::erf::{erf, erfc, erfc_inv};

use crate::error::{invalid, Result};
use crate::lao::GammaMap;
use crate::numerics::Rng;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
#[inline]
pub fn std_normal_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Standard normal CDF.
#[inline]
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

/// `Phi(b) - Phi(a)` for `a <= b`, evaluated in whichever tail keeps precision.
fn std_normal_mass(a: f64, b: f64) -> f64 {
    let mass = if a >= 0.0 {
        0.5 * (erfc(a * FRAC_1_SQRT_2) - erfc(b * FRAC_1_SQRT_2))
    } else if b <= 0.0 {
        0.5 * (erfc(-b * FRAC_1_SQRT_2) - erfc(-a * FRAC_1_SQRT_2))
    } else {
        0.5 * (erf(b * FRAC_1_SQRT_2) - erf(a * FRAC_1_SQRT_2))
    };
    if mass > 0.0 {
        mass
    } else {
        // interval too narrow (or too far out) to resolve by differencing
        (b - a) * std_normal_pdf(0.5 * (a + b))
    }
}

/// Normal `N(mu, sigma^2)` restricted and renormalized to `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncGaussian {
    pub mu: f64,
    pub sigma: f64,
    pub lo: f64,
    pub hi: f64,
}

impl TruncGaussian {
    pub fn new(mu: f64, sigma: f64, lo: f64, hi: f64) -> Result<Self> {
        if !(mu.is_finite() && lo.is_finite() && hi.is_finite()) {
            return Err(invalid("truncated Gaussian parameters must be finite"));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(invalid(format!("sigma must be positive, got {sigma}")));
        }
        if lo >= hi {
            return Err(invalid(format!("truncation bounds must satisfy lo < hi, got [{lo}, {hi}]")));
        }
        Ok(Self { mu, sigma, lo, hi })
    }

    #[inline]
    fn standardized(&self) -> (f64, f64) {
        ((self.lo - self.mu) / self.sigma, (self.hi - self.mu) / self.sigma)
    }

    /// Normalizing mass `Z = Phi(beta) - Phi(alpha)`.
    pub fn normalizer(&self) -> f64 {
        let (a, b) = self.standardized();
        std_normal_mass(a, b)
    }

    pub fn contains(&self, x: f64) -> bool {
        (self.lo..=self.hi).contains(&x)
    }

    /// Closed-form mean of the truncated distribution.
    pub fn mean(&self) -> f64 {
        let (a, b) = self.standardized();
        self.mu + self.sigma * (std_normal_pdf(a) - std_normal_pdf(b)) / self.normalizer()
    }

    /// Closed-form variance of the truncated distribution.
    pub fn variance(&self) -> f64 {
        let (a, b) = self.standardized();
        let z = self.normalizer();
        let (pa, pb) = (std_normal_pdf(a), std_normal_pdf(b));
        let shift = (pa - pb) / z;
        self.sigma * self.sigma * (1.0 + (a * pa - b * pb) / z - shift * shift)
    }

    /// Unnormalized log density on the support, `-inf` outside.
    fn log_kernel(&self, x: f64) -> f64 {
        if !self.contains(x) {
            return f64::NEG_INFINITY;
        }
        let z = (x - self.mu) / self.sigma;
        -0.5 * z * z
    }
}

pub fn truncnorm_pdf(d: &TruncGaussian, x: f64) -> f64 {
    if !d.contains(x) {
        return 0.0;
    }
    std_normal_pdf((x - d.mu) / d.sigma) / (d.sigma * d.normalizer())
}

pub fn truncnorm_cdf(d: &TruncGaussian, x: f64) -> f64 {
    if x <= d.lo {
        return 0.0;
    }
    if x >= d.hi {
        return 1.0;
    }
    let (a, _) = d.standardized();
    let zx = (x - d.mu) / d.sigma;
    (std_normal_mass(a, zx) / d.normalizer()).clamp(0.0, 1.0)
}

/// Inverse standard normal CDF.
fn std_normal_quantile(p: f64) -> f64 {
    -SQRT_2 * erfc_inv(2.0 * p)
}

/// Inverse-CDF draw. Intervals in the upper tail are mirrored into the lower
/// tail so the CDF values being inverted stay well resolved.
pub fn truncnorm_sample(d: &TruncGaussian, rng: &mut Rng) -> f64 {
    let (mut a, mut b) = d.standardized();
    let mirrored = a > 0.0;
    if mirrored {
        (a, b) = (-b, -a);
    }
    let (pa, pb) = (std_normal_cdf(a), std_normal_cdf(b));
    let u = rng.uniform();
    let z = if pb - pa > 0.0 { std_normal_quantile(pa + u * (pb - pa)).clamp(a, b) } else { a + u * (b - a) };
    let z = if mirrored { -z } else { z };
    (d.mu + d.sigma * z).clamp(d.lo, d.hi)
}

/// Mass of the truncated proposal kernel centred at `center`.
fn proposal_normalizer(center: f64, step: f64, lo: f64, hi: f64) -> f64 {
    std_normal_mass((lo - center) / step, (hi - center) / step)
}

/// Log Metropolis-Hastings acceptance ratio for moving `current -> proposal`.
pub fn mh_log_ratio(current: f64, proposal: f64, target: &TruncGaussian, step_lambda: f64) -> f64 {
    if proposal == current {
        return 0.0;
    }
    let target_term = target.log_kernel(proposal) - target.log_kernel(current);
    // The Gaussian kernel part of q is symmetric; only the truncation masses differ.
    let hastings = proposal_normalizer(current, step_lambda, target.lo, target.hi).ln()
        - proposal_normalizer(proposal, step_lambda, target.lo, target.hi).ln();
    target_term + hastings
}

/// One Metropolis-Hastings transition with a truncated Gaussian random-walk proposal.
pub fn mh_step(current: f64, target: &TruncGaussian, step_lambda: f64, rng: &mut Rng) -> f64 {
    debug_assert!(step_lambda > 0.0);
    let kernel = TruncGaussian { mu: current, sigma: step_lambda, lo: target.lo, hi: target.hi };
    let proposal = truncnorm_sample(&kernel, rng);
    let log_ratio = mh_log_ratio(current, proposal, target, step_lambda);
    let u = rng.uniform();
    if log_ratio >= 0.0 || u < log_ratio.exp() {
        proposal
    } else {
        current
    }
}

/// Sampling target for the operator values: either a proper truncated
/// Gaussian, or a point mass when the exponent range collapses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LaoDistribution {
    Degenerate(f64),
    Trunc(TruncGaussian),
}

impl LaoDistribution {
    pub fn is_degenerate(&self) -> bool {
        matches!(self, LaoDistribution::Degenerate(_))
    }

    pub fn bounds(&self) -> (f64, f64) {
        match self {
            LaoDistribution::Degenerate(v) => (*v, *v),
            LaoDistribution::Trunc(d) => (d.lo, d.hi),
        }
    }

    pub fn center(&self) -> f64 {
        match self {
            LaoDistribution::Degenerate(v) => *v,
            LaoDistribution::Trunc(d) => d.mu,
        }
    }

    pub fn sigma(&self) -> f64 {
        match self {
            LaoDistribution::Degenerate(_) => 0.0,
            LaoDistribution::Trunc(d) => d.sigma,
        }
    }
}

/// Target distribution from a per-pixel exponent map: centred on the mean
/// exponent, truncated to its range, spread set by `sigma_override` or the
/// map's standard deviation.
pub fn build_distribution(gm: &GammaMap, sigma_override: Option<f64>) -> Result<LaoDistribution> {
    if let Some(s) = sigma_override {
        if !(s > 0.0 && s.is_finite()) {
            return Err(invalid(format!("sigma override must be positive, got {s}")));
        }
    }
    if gm.gamma_min >= gm.gamma_max {
        return Ok(LaoDistribution::Degenerate(gm.gamma_0));
    }
    let sigma = sigma_override.unwrap_or_else(|| gm.std_dev());
    if sigma <= 0.0 {
        return Ok(LaoDistribution::Degenerate(gm.gamma_0));
    }
    Ok(LaoDistribution::Trunc(TruncGaussian::new(gm.gamma_0, sigma, gm.gamma_min, gm.gamma_max)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainConfig {
    /// Proposal step size.
    pub step_lambda: f64,
    /// Number of hierarchy levels.
    pub levels: usize,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self { step_lambda: 0.2, levels: 4 }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_lambda > 0.0 && self.step_lambda.is_finite()) {
            return Err(invalid(format!("step lambda must be positive, got {}", self.step_lambda)));
        }
        if self.levels < 1 {
            return Err(invalid("hierarchy needs at least one level"));
        }
        if self.levels > 24 {
            return Err(invalid(format!("{} levels would need 2^{} operators", self.levels, self.levels - 1)));
        }
        Ok(())
    }
}

/// Operator values for one hierarchy level; level `n` holds `2^(n-1)` values.
#[derive(Debug, Clone, PartialEq)]
pub struct LaoSet {
    pub level: usize,
    pub values: Vec<f64>,
}

impl LaoSet {
    pub fn new(level: usize, values: Vec<f64>) -> Result<Self> {
        if level == 0 || level > 32 || values.len() != 1usize << (level - 1) {
            return Err(invalid(format!("level {level} needs 2^(n-1) values, got {}", values.len())));
        }
        if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(invalid("operator values must be positive and finite"));
        }
        Ok(Self { level, values })
    }

    /// Set of identical values, handy for identity hierarchies.
    pub fn constant(level: usize, value: f64) -> Self {
        Self::new(level, vec![value; 1usize << (level - 1)]).expect("valid constant set")
    }
}

/// Runs a fresh chain from `init` for every level `n = 1..=N`, recording the
/// `2^(n-1)` successive states as that level's operator set.
pub fn sample_lao_hierarchy(
    dist: &LaoDistribution,
    cfg: &ChainConfig,
    init: f64,
    rng: &mut Rng,
) -> Result<Vec<LaoSet>> {
    cfg.validate()?;
    let target = match dist {
        LaoDistribution::Degenerate(v) => {
            return (1..=cfg.levels).map(|n| LaoSet::new(n, vec![*v; 1usize << (n - 1)])).collect();
        }
        LaoDistribution::Trunc(d) => d,
    };
    if !target.contains(init) {
        return Err(invalid(format!("chain start {init} outside [{}, {}]", target.lo, target.hi)));
    }
    (1..=cfg.levels)
        .map(|n| {
            let mut state = init;
            let values = (0..1usize << (n - 1))
                .map(|_| {
                    state = mh_step(state, target, cfg.step_lambda, rng);
                    state
                })
                .collect();
            LaoSet::new(n, values)
        })
        .collect()
}

/// Kolmogorov-Smirnov statistic `sup |F_n - F|` of `samples` against `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted.iter().enumerate().fold(0.0, |d, (i, &x)| {
        let f = cdf(x);
        d.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    })
}

/// Asymptotic one-sample KS critical value at the 1% level.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.627_6 / (n as f64).sqrt()
}
