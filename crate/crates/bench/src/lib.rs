//! Seeded inputs shared by the benchmarks.

use lasq_core::denoiser::{encode, ToyExample};
use lasq_core::pipeline::{run_hierarchy, toy_example};
use lasq_core::synthetic::{darken, synthetic_scene};
use lasq_core::{DiffusionSchedule, EncoderConfig, Grid2D, HierarchyConfig, Image, PsiRounding, Rng, TauSchedule};

pub fn dark_scene(size: usize, seed: u64) -> Image {
    darken(&synthetic_scene(size, size, &mut Rng::new(seed)), 2.5)
}

pub fn luma_plane(size: usize, seed: u64) -> Grid2D {
    let mut rng = Rng::new(seed);
    Grid2D::from_fn(size, size, |_, _| rng.uniform())
}

pub fn schedule(t_steps: usize) -> DiffusionSchedule {
    DiffusionSchedule::linear(t_steps, 1e-4, 0.02, TauSchedule::default(), PsiRounding::Floor).expect("valid schedule")
}

/// `count` training examples from dark `size x size` scenes.
pub fn toy_examples(count: usize, size: usize, enc: &EncoderConfig) -> Vec<ToyExample> {
    let mut rng = Rng::new(7);
    (0..count)
        .map(|i| {
            let low = dark_scene(size, 100 + i as u64);
            let run = run_hierarchy(&low, &HierarchyConfig::default(), &mut rng).expect("hierarchy");
            toy_example(&low, &run.stack, enc).expect("example")
        })
        .collect()
}

pub fn condition(size: usize, enc: &EncoderConfig) -> lasq_core::Latent {
    encode(&dark_scene(size, 3), enc).expect("encodable size")
}
