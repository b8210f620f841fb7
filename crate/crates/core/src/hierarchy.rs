//! Coarse-to-fine grid partitions and synthesis of the hierarchical
//! enhancement stack.
//!
//! Level `n` splits the image into `m_n x w_n` patches with
//! `m_n = 2^ceil((n-1)/2)` rows and `w_n = 2^floor((n-1)/2)` columns, so each
//! level doubles the patch count. Chain state `z` drives the `z`-th patch in
//! row-major order, and every level is rendered from the source image.

use crate::error::{invalid, Result};
use crate::imageio::Image;
use crate::lao::{apply_lao_in_place, ApplyMode};
use crate::luminance::Region;
use crate::sampler::LaoSet;

/// Patch-grid shape `(rows of patches, columns of patches)` for a level.
pub fn grid_shape(level: usize) -> (usize, usize) {
    assert!(level >= 1, "levels start at 1");
    let k = level - 1;
    (1usize << k.div_ceil(2), 1usize << (k / 2))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridPartition {
    pub level: usize,
    pub grid_rows: usize,
    pub grid_cols: usize,
    /// Row-major patches, `grid_rows * grid_cols` of them.
    pub regions: Vec<Region>,
}

/// `n` contiguous bands over `len` pixels; the last band takes the remainder.
fn bands(len: usize, n: usize) -> Vec<(usize, usize)> {
    let base = len / n;
    (0..n)
        .map(|i| {
            let start = i * base;
            let end = if i + 1 == n { len } else { start + base };
            (start, end)
        })
        .collect()
}

pub fn grid_partition(rows: usize, cols: usize, level: usize) -> Result<GridPartition> {
    if !(1..=40).contains(&level) {
        return Err(invalid(format!("level must be in 1..=40, got {level}")));
    }
    let (m, w) = grid_shape(level);
    if rows < m || cols < w {
        return Err(invalid(format!("{rows}x{cols} image is smaller than the {m}x{w} patch grid of level {level}")));
    }
    let row_bands = bands(rows, m);
    let col_bands = bands(cols, w);
    let regions = row_bands
        .iter()
        .flat_map(|&(r0, r1)| col_bands.iter().map(move |&(c0, c1)| Region::new(r0, r1, c0, c1)))
        .collect();
    Ok(GridPartition { level, grid_rows: m, grid_cols: w, regions })
}

/// Applies `gamma_set.values[z]` to patch `z` of `part`.
pub fn synthesize_level(img: &Image, gamma_set: &LaoSet, part: &GridPartition) -> Result<Image> {
    synthesize_level_with_mode(img, gamma_set, part, ApplyMode::Rgb)
}

pub fn synthesize_level_with_mode(
    img: &Image,
    gamma_set: &LaoSet,
    part: &GridPartition,
    mode: ApplyMode,
) -> Result<Image> {
    if gamma_set.level != part.level {
        return Err(invalid(format!(
            "operator set is level {} but partition is level {}",
            gamma_set.level, part.level
        )));
    }
    if gamma_set.values.len() != part.regions.len() {
        return Err(invalid(format!("{} operators for {} patches", gamma_set.values.len(), part.regions.len())));
    }
    let mut out = img.clone();
    for (region, &gamma) in part.regions.iter().zip(&gamma_set.values) {
        apply_lao_in_place(&mut out, region, gamma, mode)?;
    }
    Ok(out)
}

/// Enhanced images `I_H^(1..=N)`, each rendered from `source`.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyStack {
    pub source: Image,
    pub levels: Vec<Image>,
}

impl HierarchyStack {
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// The coarsest (globally corrected) level.
    pub fn coarsest(&self) -> &Image {
        &self.levels[0]
    }
}

pub fn build_stack(img: &Image, gamma_hierarchy: &[LaoSet]) -> Result<HierarchyStack> {
    build_stack_with_mode(img, gamma_hierarchy, ApplyMode::Rgb)
}

pub fn build_stack_with_mode(img: &Image, gamma_hierarchy: &[LaoSet], mode: ApplyMode) -> Result<HierarchyStack> {
    if gamma_hierarchy.is_empty() {
        return Err(invalid("operator hierarchy is empty"));
    }
    let levels = gamma_hierarchy
        .iter()
        .enumerate()
        .map(|(i, set)| {
            if set.level != i + 1 {
                return Err(invalid(format!("hierarchy entry {i} has level {}", set.level)));
            }
            let part = grid_partition(img.rows(), img.cols(), set.level)?;
            synthesize_level_with_mode(img, set, &part, mode)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(HierarchyStack { source: img.clone(), levels })
}
