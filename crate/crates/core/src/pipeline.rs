//! End-to-end hierarchy construction for one low-light image, and the
//! encoding of its stack into a training example.

use crate::denoiser::{encode, EncoderConfig, ToyExample};
use crate::error::Result;
use crate::hierarchy::{build_stack_with_mode, HierarchyStack};
use crate::imageio::{rgb_to_yuv, Image};
use crate::lao::{compute_gamma, pixel_gamma_map, ApplyMode, GammaMap, LaoParams};
use crate::luminance::{guided_filter_luminance, region_stats, GuidedFilterParams, LuminanceMap, Region};
use crate::numerics::Rng;
use crate::sampler::{build_distribution, sample_lao_hierarchy, ChainConfig, LaoDistribution, LaoSet};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HierarchyConfig {
    pub guided: GuidedFilterParams,
    pub lao: LaoParams,
    /// Replaces the spread of the per-pixel exponent map when set.
    pub sigma_override: Option<f64>,
    pub chain: ChainConfig,
    pub mode: ApplyMode,
}

impl HierarchyConfig {
    pub fn validate(&self) -> Result<()> {
        self.guided.validate()?;
        self.lao.validate()?;
        self.chain.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyRun {
    pub luminance: LuminanceMap,
    pub gamma_map: GammaMap,
    pub distribution: LaoDistribution,
    /// Chain start: the whole-image exponent, clipped to the support.
    pub init: f64,
    pub sets: Vec<LaoSet>,
    pub stack: HierarchyStack,
}

/// Luminance, exponent map, target distribution, sampled operator sets and
/// the rendered stack for `img`.
pub fn run_hierarchy(img: &Image, cfg: &HierarchyConfig, rng: &mut Rng) -> Result<HierarchyRun> {
    cfg.validate()?;
    let (y, _, _) = rgb_to_yuv(img);
    let luminance = guided_filter_luminance(&y.map(|v| v.clamp(0.0, 1.0)), &cfg.guided)?;
    let gamma_map = pixel_gamma_map(&luminance, &cfg.lao);
    let distribution = build_distribution(&gamma_map, cfg.sigma_override)?;
    let whole = region_stats(&luminance, &Region::full(img.rows(), img.cols()))?;
    let (lo, hi) = distribution.bounds();
    let init = compute_gamma(whole.g_p, whole.var_g, &cfg.lao).clamp(lo, hi);
    let sets = sample_lao_hierarchy(&distribution, &cfg.chain, init, rng)?;
    let stack = build_stack_with_mode(img, &sets, cfg.mode)?;
    Ok(HierarchyRun { luminance, gamma_map, distribution, init, sets, stack })
}

/// Encodes a low-light image and its stack: guides `E(I_H^(n))`, condition `E(I_L)`.
pub fn toy_example(low: &Image, stack: &HierarchyStack, enc: &EncoderConfig) -> Result<ToyExample> {
    let guides = stack.levels.iter().map(|l| encode(l, enc)).collect::<Result<Vec<_>>>()?;
    ToyExample::new(guides, encode(low, enc)?, enc)
}
