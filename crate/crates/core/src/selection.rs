//! Tracklet confidence, unified candidate scoring and NMS selection.

use std::cmp::Ordering;

use crate::geometry::iou;
use crate::types::{Candidate, CandidateSource};

/// Association counters for the most recent tracklet of a track.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TrackletCounters {
    /// Detections associated to the tracklet.
    pub l_det: u32,
    /// Frames without a detection since the last detection association.
    pub l_trk: u32,
}

impl TrackletCounters {
    pub fn on_detection(&mut self) {
        self.l_det += 1;
        self.l_trk = 0;
    }

    pub fn on_prediction(&mut self) {
        self.l_trk += 1;
    }

    pub fn reset(&mut self) {
        *self = Self::default();
    }
}

/// `max(1 - ln(1 + alpha * l_trk), 0)` when at least two detections support
/// the tracklet, otherwise zero.
pub fn tracklet_confidence(counters: TrackletCounters, alpha: f64) -> f64 {
    if counters.l_det < 2 {
        return 0.0;
    }
    (1.0 - (alpha * counters.l_trk as f64).ln_1p()).max(0.0)
}

/// Classifier probability for detections; probability scaled by tracklet
/// confidence for track predictions.
pub fn unified_score(classifier_prob: f64, source: CandidateSource, confidence: f64) -> f64 {
    match source {
        CandidateSource::FromDetection => classifier_prob,
        CandidateSource::FromTrack(_) => classifier_prob * confidence,
    }
}

/// Indices of `candidates` in selection order: descending score, then
/// detections before track predictions, then input order.
fn ranked(candidates: &[Candidate]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        let (ca, cb) = (&candidates[a], &candidates[b]);
        cb.unified_score
            .total_cmp(&ca.unified_score)
            .then_with(|| match (ca.source.is_detection(), cb.source.is_detection()) {
                (true, false) => Ordering::Less,
                (false, true) => Ordering::Greater,
                _ => Ordering::Equal,
            })
            .then(a.cmp(&b))
    });
    order
}

/// Greedy NMS over all candidates jointly, then drops survivors scoring
/// below `tau_s`. Returns indices into `candidates`, highest score first.
pub fn select_candidate_indices(candidates: &[Candidate], tau_nms: f64, tau_s: f64) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    for i in ranked(candidates) {
        let b = &candidates[i].bbox;
        if kept.iter().all(|&j| iou(&candidates[j].bbox, b) <= tau_nms) {
            kept.push(i);
        }
    }
    kept.retain(|&i| candidates[i].unified_score >= tau_s);
    kept
}

pub fn select_candidates(candidates: &[Candidate], tau_nms: f64, tau_s: f64) -> Vec<Candidate> {
    select_candidate_indices(candidates, tau_nms, tau_s)
        .into_iter()
        .map(|i| candidates[i].clone())
        .collect()
}
