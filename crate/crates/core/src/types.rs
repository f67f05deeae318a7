use serde::{Deserialize, Serialize};

use crate::geometry::BoundingBox;

pub type TrackId = u64;

/// One detector output for one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub frame: u32,
    pub bbox: BoundingBox,
    pub confidence: f64,
}

/// Where a candidate box came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CandidateSource {
    FromDetection,
    FromTrack(TrackId),
}

impl CandidateSource {
    pub fn is_detection(&self) -> bool {
        matches!(self, CandidateSource::FromDetection)
    }
}

/// A scored box considered for association.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub bbox: BoundingBox,
    pub source: CandidateSource,
    /// Pooled classifier probability.
    pub classifier_prob: f64,
    /// Classifier probability fused with tracklet confidence.
    pub unified_score: f64,
}

/// Confirmed tracks reported for one frame, sorted by ascending id.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FrameResult {
    pub frame: u32,
    pub tracks: Vec<(TrackId, BoundingBox)>,
}
