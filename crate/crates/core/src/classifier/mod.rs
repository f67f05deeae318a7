//! Position-sensitive score-map pooling.
//!
//! Score maps come from a [`ScoreMapProvider`]; this crate never runs a
//! network. Providers here read binary fixtures, hold grids in memory, or
//! synthesize maps from known object boxes.

mod fixture;
mod grid;
mod synth;

use std::collections::BTreeMap;
use std::sync::Arc;

pub use fixture::{
    read_grid, read_score_map_file, write_grid, write_score_map_file, FixtureScoreMaps,
    SMAP_MAGIC, SMAP_VERSION,
};
pub use grid::ScoreMapGrid;
pub use synth::{synth_score_maps, SynthParams};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;

/// Source of per-frame score maps. Implementations must be safe for
/// concurrent reads.
pub trait ScoreMapProvider: Send + Sync {
    fn score_maps(&self, frame: u32) -> Result<Arc<ScoreMapGrid>>;
}

/// Grids held in memory, keyed by frame.
#[derive(Debug, Default, Clone)]
pub struct InMemoryScoreMaps {
    grids: BTreeMap<u32, Arc<ScoreMapGrid>>,
}

impl InMemoryScoreMaps {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, grid: ScoreMapGrid) {
        self.grids.insert(grid.frame(), Arc::new(grid));
    }
}

impl FromIterator<ScoreMapGrid> for InMemoryScoreMaps {
    fn from_iter<I: IntoIterator<Item = ScoreMapGrid>>(iter: I) -> Self {
        let mut maps = Self::new();
        for g in iter {
            maps.insert(g);
        }
        maps
    }
}

impl ScoreMapProvider for InMemoryScoreMaps {
    fn score_maps(&self, frame: u32) -> Result<Arc<ScoreMapGrid>> {
        self.grids
            .get(&frame)
            .cloned()
            .ok_or_else(|| Error::Input(format!("no score maps for frame {frame}")))
    }
}

/// Generates maps on demand from ground-truth boxes.
#[derive(Debug, Clone)]
pub struct SyntheticScoreMaps {
    objects: BTreeMap<u32, Vec<BoundingBox>>,
    frame_dims: (u32, u32),
    params: SynthParams,
}

impl SyntheticScoreMaps {
    pub fn new(
        objects: BTreeMap<u32, Vec<BoundingBox>>,
        frame_dims: (u32, u32),
        params: SynthParams,
    ) -> Self {
        Self {
            objects,
            frame_dims,
            params,
        }
    }
}

impl ScoreMapProvider for SyntheticScoreMaps {
    fn score_maps(&self, frame: u32) -> Result<Arc<ScoreMapGrid>> {
        let objects = self.objects.get(&frame).map(Vec::as_slice).unwrap_or(&[]);
        synth_score_maps(frame, objects, self.frame_dims, &self.params).map(Arc::new)
    }
}

/// Pooled classification probability of `roi` on `maps`.
pub fn classify_roi(maps: &ScoreMapGrid, roi: &BoundingBox) -> Result<f64> {
    maps.classify_roi(roi)
}

/// Per-cell reference implementation of [`classify_roi`].
pub fn classify_roi_naive(maps: &ScoreMapGrid, roi: &BoundingBox) -> Result<f64> {
    maps.classify_roi_naive(roi)
}
