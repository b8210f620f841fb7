//! Statistical low-light enhancement.
//!
//! A guided-filter luminance estimate drives per-region power-law operators
//! `v -> v^(1/gamma)`. Operator values are sampled by a Metropolis-Hastings
//! chain over a truncated Gaussian, arranged on a coarse-to-fine grid
//! hierarchy, and the resulting stack of enhanced images guides a latent
//! diffusion process with a small trainable noise predictor.

pub mod denoiser;
pub mod diffusion;
pub mod error;
pub mod hierarchy;
pub mod imageio;
pub mod lao;
pub mod luminance;
pub mod lv_analysis;
pub mod metrics;
pub mod numerics;
pub mod pipeline;
pub mod sampler;
pub mod synthetic;

pub use denoiser::{DenoiserParams, EncoderConfig, LossWeights, TrainConfig};
pub use diffusion::{DiffusionSchedule, Latent, PsiRounding, TauSchedule};
pub use error::{LasqError, Result};
pub use hierarchy::{GridPartition, HierarchyStack};
pub use imageio::{BitDepth, Image};
pub use lao::{ApplyMode, GammaMap, LaoParams};
pub use luminance::{GuidedFilterParams, LuminanceMap, Region};
pub use metrics::MetricReport;
pub use numerics::{Grid2D, Rng};
pub use pipeline::{HierarchyConfig, HierarchyRun};
pub use sampler::{ChainConfig, LaoDistribution, LaoSet, TruncGaussian};
