//! Per-frame tracking step: candidate collection, scoring, selection,
//! two-stage association and track lifecycle.

use std::collections::BTreeMap;
use std::ops::RangeInclusive;

use log::debug;

use super::assignment::min_cost_match;
use crate::appearance::{Embedding, EmbeddingProvider, FeatureGallery};
use crate::classifier::{ScoreMapGrid, ScoreMapProvider};
use crate::config::TrackerConfig;
use crate::error::{Error, Result};
use crate::geometry::{iou, BoundingBox};
use crate::motion::{KalmanFilter, MotionState};
use crate::selection::{select_candidate_indices, tracklet_confidence, unified_score, TrackletCounters};
use crate::types::{Candidate, CandidateSource, Detection, FrameResult, TrackId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrackState {
    Tentative,
    Confirmed,
    Lost,
    Removed,
}

impl TrackState {
    pub fn can_transition_to(self, next: TrackState) -> bool {
        use TrackState::*;
        matches!(
            (self, next),
            (Tentative, Tentative)
                | (Tentative, Confirmed)
                | (Tentative, Removed)
                | (Confirmed, Confirmed)
                | (Confirmed, Lost)
                | (Lost, Lost)
                | (Lost, Confirmed)
                | (Lost, Removed)
        )
    }
}

#[derive(Debug, Clone)]
pub struct Track {
    pub id: TrackId,
    pub state: TrackState,
    pub motion: MotionState,
    pub counters: TrackletCounters,
    pub gallery: FeatureGallery,
    /// Last frame in which the track was associated.
    pub last_frame: u32,
    pub frames_lost: u32,
    /// Detections associated over the whole lifetime, across tracklets.
    pub detections_total: u32,
    /// Box of the most recent association.
    pub last_box: BoundingBox,
    /// Boxes associated while tentative, reported late once confirmed.
    pub tentative_boxes: Vec<(u32, BoundingBox)>,
}

impl Track {
    fn set_state(&mut self, next: TrackState) {
        debug_assert!(
            self.state.can_transition_to(next),
            "illegal transition {:?} -> {:?}",
            self.state,
            next
        );
        self.state = next;
    }
}

/// Bookkeeping from the most recent [`Tracker::step`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StepStats {
    pub detection_candidates: usize,
    pub track_candidates: usize,
    pub selected: usize,
    /// Tracks that took part in at least one association stage.
    pub tracks_in_association: usize,
    pub appearance_matches: usize,
    pub iou_matches: usize,
    pub unmatched_tracks: usize,
    /// Selected candidates left unmatched after both stages.
    pub unmatched_candidates: usize,
    /// Stage-two matches of a track to another track's prediction.
    pub cross_track_matches: usize,
    pub new_tracks: usize,
    pub removed_tracks: usize,
    /// Matched `(track id, candidate source)` pairs.
    pub matches: Vec<(TrackId, CandidateSource)>,
}

/// Online tracker state for one sequence.
#[derive(Debug, Clone)]
pub struct Tracker {
    config: TrackerConfig,
    kf: KalmanFilter,
    tracks: Vec<Track>,
    next_id: TrackId,
    last_frame: Option<u32>,
    stats: StepStats,
    backfill: Vec<(u32, TrackId, BoundingBox)>,
    threads: usize,
}

/// Below this many track/detection pairs, threads cost more than they save.
const PARALLEL_MIN_PAIRS: usize = 256;

struct Scored {
    candidates: Vec<Candidate>,
    selected: Vec<usize>,
}

fn classify_or_zero(maps: &ScoreMapGrid, roi: &BoundingBox) -> Result<f64> {
    match maps.classify_roi(roi) {
        Ok(p) => Ok(p),
        Err(Error::OutOfBounds) => Ok(0.0),
        Err(e) => Err(e),
    }
}

impl Tracker {
    pub fn new(config: TrackerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            kf: KalmanFilter::from(&config),
            config,
            tracks: Vec::new(),
            next_id: 1,
            last_frame: None,
            stats: StepStats::default(),
            backfill: Vec::new(),
            threads: 1,
        })
    }

    /// Worker threads for appearance distances. Results do not depend on
    /// the thread count.
    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = threads.max(1);
        self
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    /// Live tracks (tentative, confirmed and lost).
    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn track(&self, id: TrackId) -> Option<&Track> {
        self.tracks.iter().find(|t| t.id == id)
    }

    pub fn last_stats(&self) -> &StepStats {
        &self.stats
    }

    /// `(frame, id, box)` of earlier tentative associations of tracks
    /// confirmed since the last call. Not part of any step's output.
    pub fn take_backfill(&mut self) -> Vec<(u32, TrackId, BoundingBox)> {
        std::mem::take(&mut self.backfill)
    }

    /// Processes one frame and returns the confirmed tracks associated in it.
    pub fn step(
        &mut self,
        frame: u32,
        detections: &[Detection],
        score_maps: &dyn ScoreMapProvider,
        embeddings: &dyn EmbeddingProvider,
    ) -> Result<FrameResult> {
        if let Some(previous) = self.last_frame {
            if frame <= previous {
                return Err(Error::Sequence { previous, got: frame });
            }
        }
        let result = self
            .step_inner(frame, detections, score_maps, embeddings)
            .map_err(|e| e.in_frame(frame))?;
        self.last_frame = Some(frame);
        Ok(result)
    }

    fn step_inner(
        &mut self,
        frame: u32,
        detections: &[Detection],
        score_maps: &dyn ScoreMapProvider,
        embeddings: &dyn EmbeddingProvider,
    ) -> Result<FrameResult> {
        let cfg = self.config.clone();
        let maps = score_maps.score_maps(frame)?;
        if maps.k() != cfg.k {
            return Err(Error::Input(format!(
                "score maps have k = {}, configuration expects {}",
                maps.k(),
                cfg.k
            )));
        }
        let mut stats = StepStats::default();

        // Predict every track; states whose box degenerates are dropped.
        let mut predicted: Vec<BoundingBox> = Vec::with_capacity(self.tracks.len());
        let before = self.tracks.len();
        let kf = self.kf;
        self.tracks.retain_mut(|t| {
            t.motion = kf.predict(&t.motion);
            match t.motion.to_box() {
                Ok(b) => {
                    predicted.push(b);
                    true
                }
                Err(e) => {
                    debug!("dropping track {}: {e}", t.id);
                    false
                }
            }
        });
        stats.removed_tracks += before - self.tracks.len();

        let scored = self.collect_and_select(&maps, detections, &predicted, &mut stats)?;
        let Scored {
            candidates,
            selected,
        } = scored;

        // Embeddings are needed for selected detection candidates only.
        let mut features: BTreeMap<usize, Embedding> = BTreeMap::new();
        if cfg.use_appearance {
            for &ci in &selected {
                let c = &candidates[ci];
                if !c.source.is_detection() {
                    continue;
                }
                let mut e = embeddings.embed(frame, &c.bbox)?;
                if e.dim() != cfg.embedding_dim {
                    return Err(Error::DimensionMismatch {
                        expected: cfg.embedding_dim,
                        actual: e.dim(),
                    });
                }
                if cfg.normalize_embeddings {
                    e = e.normalized();
                }
                features.insert(ci, e);
            }
        }

        let mut track_match: Vec<Option<usize>> = vec![None; self.tracks.len()];
        let mut cand_taken: BTreeMap<usize, usize> = BTreeMap::new();
        let mut participated = vec![false; self.tracks.len()];

        // Stage 1: appearance between confirmed/lost tracks and detections.
        if cfg.use_appearance {
            let rows: Vec<usize> = (0..self.tracks.len())
                .filter(|&i| {
                    matches!(self.tracks[i].state, TrackState::Confirmed | TrackState::Lost)
                        && !self.tracks[i].gallery.is_empty()
                })
                .collect();
            let cols: Vec<usize> = features.keys().copied().collect();
            let mut cost = vec![vec![f64::INFINITY; cols.len()]; rows.len()];
            for &ti in &rows {
                participated[ti] = true;
            }
            let tracks = &self.tracks;
            let fill = |chunk: &mut [Vec<f64>], row_ids: &[usize]| -> Result<()> {
                for (row, &ti) in chunk.iter_mut().zip(row_ids) {
                    let gallery = &tracks[ti].gallery;
                    for (c, ci) in cols.iter().enumerate() {
                        if let Some(d) = gallery.distance_within(&features[ci], cfg.tau_d)? {
                            row[c] = d;
                        }
                    }
                }
                Ok(())
            };
            let workers = self.threads.min(rows.len()).max(1);
            if workers > 1 && rows.len() * cols.len() >= PARALLEL_MIN_PAIRS {
                let per = rows.len().div_ceil(workers);
                std::thread::scope(|scope| {
                    let handles: Vec<_> = cost
                        .chunks_mut(per)
                        .zip(rows.chunks(per))
                        .map(|(chunk, ids)| scope.spawn(|| fill(chunk, ids)))
                        .collect();
                    // join every worker before reporting the first error
                    let results: Vec<Result<()>> = handles
                        .into_iter()
                        .map(|h| h.join().expect("distance worker panicked"))
                        .collect();
                    results.into_iter().collect::<Result<()>>()
                })?;
            } else {
                fill(&mut cost, &rows)?;
            }
            let a = min_cost_match(&cost, cfg.tau_d);
            for (r, c) in a.matches {
                track_match[rows[r]] = Some(cols[c]);
                cand_taken.insert(cols[c], rows[r]);
            }
            stats.appearance_matches = cand_taken.len();
        }

        // Stage 2: IoU between remaining non-lost tracks and candidates.
        let rows: Vec<usize> = (0..self.tracks.len())
            .filter(|&i| track_match[i].is_none() && self.tracks[i].state != TrackState::Lost)
            .collect();
        let cols: Vec<usize> = selected
            .iter()
            .copied()
            .filter(|ci| !cand_taken.contains_key(ci))
            .collect();
        let cost: Vec<Vec<f64>> = rows
            .iter()
            .map(|&ti| {
                participated[ti] = true;
                cols.iter()
                    .map(|&ci| 1.0 - iou(&predicted[ti], &candidates[ci].bbox))
                    .collect()
            })
            .collect();
        let a = min_cost_match(&cost, 1.0 - cfg.tau_iou);
        for (r, c) in a.matches {
            track_match[rows[r]] = Some(cols[c]);
            cand_taken.insert(cols[c], rows[r]);
            stats.iou_matches += 1;
        }
        stats.tracks_in_association = participated.iter().filter(|&&p| p).count();

        // Update matched tracks, age unmatched ones.
        let mut output: Vec<(TrackId, BoundingBox)> = Vec::new();
        for (ti, m) in track_match.iter().enumerate() {
            let t = &mut self.tracks[ti];
            match *m {
                Some(ci) => {
                    let cand = &candidates[ci];
                    stats.matches.push((t.id, cand.source));
                    match cand.source {
                        CandidateSource::FromDetection => {
                            if t.state == TrackState::Lost {
                                // retrieval starts a new tracklet
                                t.motion = kf.init(&cand.bbox);
                                t.counters.reset();
                                t.frames_lost = 0;
                                t.set_state(TrackState::Confirmed);
                            } else {
                                t.motion = kf.update(&t.motion, &cand.bbox)?;
                            }
                            t.counters.on_detection();
                            t.detections_total += 1;
                            if let Some(e) = features.get(&ci) {
                                t.gallery.push(e.clone());
                            }
                            if t.state == TrackState::Tentative && t.counters.l_det >= 2 {
                                t.set_state(TrackState::Confirmed);
                            }
                        }
                        CandidateSource::FromTrack(owner) => {
                            if owner != t.id {
                                debug!("frame {frame}: track {} took prediction of track {owner}", t.id);
                                stats.cross_track_matches += 1;
                            }
                            t.motion = kf.update(&t.motion, &cand.bbox)?;
                            t.counters.on_prediction();
                        }
                    }
                    t.last_frame = frame;
                    t.last_box = cand.bbox;
                    if t.state == TrackState::Confirmed {
                        let id = t.id;
                        self.backfill.extend(t.tentative_boxes.drain(..).map(|(f, b)| (f, id, b)));
                        output.push((id, cand.bbox));
                    } else {
                        t.tentative_boxes.push((frame, cand.bbox));
                    }
                }
                None => {
                    if participated[ti] {
                        stats.unmatched_tracks += 1;
                    }
                    t.counters.on_prediction();
                    match t.state {
                        TrackState::Tentative => t.set_state(TrackState::Removed),
                        TrackState::Confirmed => {
                            t.set_state(TrackState::Lost);
                            t.frames_lost = 1;
                        }
                        TrackState::Lost => {
                            t.frames_lost += 1;
                            if t.frames_lost > cfg.max_lost_frames {
                                t.set_state(TrackState::Removed);
                            }
                        }
                        TrackState::Removed => {}
                    }
                }
            }
        }
        let before = self.tracks.len();
        self.tracks.retain(|t| t.state != TrackState::Removed);
        stats.removed_tracks += before - self.tracks.len();

        // Remaining selected detections start new tracks.
        for &ci in &selected {
            if cand_taken.contains_key(&ci) {
                continue;
            }
            stats.unmatched_candidates += 1;
            let cand = &candidates[ci];
            if !cand.source.is_detection() {
                continue;
            }
            let mut gallery = FeatureGallery::new(cfg.gallery_capacity);
            if let Some(e) = features.remove(&ci) {
                gallery.push(e);
            }
            let mut counters = TrackletCounters::default();
            counters.on_detection();
            self.tracks.push(Track {
                id: self.next_id,
                state: TrackState::Tentative,
                motion: kf.init(&cand.bbox),
                counters,
                gallery,
                last_frame: frame,
                frames_lost: 0,
                detections_total: 1,
                last_box: cand.bbox,
                tentative_boxes: vec![(frame, cand.bbox)],
            });
            self.next_id += 1;
            stats.new_tracks += 1;
        }

        output.sort_by_key(|&(id, _)| id);
        self.stats = stats;
        Ok(FrameResult {
            frame,
            tracks: output,
        })
    }

    fn collect_and_select(
        &self,
        maps: &ScoreMapGrid,
        detections: &[Detection],
        predicted: &[BoundingBox],
        stats: &mut StepStats,
    ) -> Result<Scored> {
        let cfg = &self.config;
        let mut candidates = Vec::with_capacity(detections.len() + predicted.len());
        for d in detections {
            let p = classify_or_zero(maps, &d.bbox)?;
            candidates.push(Candidate {
                bbox: d.bbox,
                source: CandidateSource::FromDetection,
                classifier_prob: p,
                unified_score: unified_score(p, CandidateSource::FromDetection, 1.0),
            });
        }
        stats.detection_candidates = candidates.len();
        if cfg.use_track_candidates {
            for (t, b) in self.tracks.iter().zip(predicted) {
                let p = classify_or_zero(maps, b)?;
                let source = CandidateSource::FromTrack(t.id);
                let conf = tracklet_confidence(t.counters, cfg.alpha);
                candidates.push(Candidate {
                    bbox: *b,
                    source,
                    classifier_prob: p,
                    unified_score: unified_score(p, source, conf),
                });
            }
        }
        stats.track_candidates = candidates.len() - stats.detection_candidates;
        let selected = select_candidate_indices(&candidates, cfg.tau_nms, cfg.tau_s);
        stats.selected = selected.len();
        Ok(Scored {
            candidates,
            selected,
        })
    }
}

impl Tracker {
    /// Steps through every frame of `frame_range`, treating absent frames as
    /// frames without detections.
    pub fn run(
        &mut self,
        frames: &BTreeMap<u32, Vec<Detection>>,
        frame_range: RangeInclusive<u32>,
        score_maps: &dyn ScoreMapProvider,
        embeddings: &dyn EmbeddingProvider,
    ) -> Result<Vec<FrameResult>> {
        let empty = Vec::new();
        let mut out: Vec<FrameResult> = Vec::new();
        for frame in frame_range {
            let dets = frames.get(&frame).unwrap_or(&empty);
            out.push(self.step(frame, dets, score_maps, embeddings)?);
            let late = self.take_backfill();
            if !self.config.backfill_tentative {
                continue;
            }
            for (f, id, b) in late {
                if let Ok(i) = out.binary_search_by_key(&f, |r| r.frame) {
                    out[i].tracks.push((id, b));
                    out[i].tracks.sort_by_key(|t| t.0);
                }
            }
        }
        Ok(out)
    }
}

/// Runs a fresh tracker over `frame_range`.
pub fn run_sequence(
    frames: &BTreeMap<u32, Vec<Detection>>,
    frame_range: RangeInclusive<u32>,
    score_maps: &dyn ScoreMapProvider,
    embeddings: &dyn EmbeddingProvider,
    config: &TrackerConfig,
) -> Result<Vec<FrameResult>> {
    Tracker::new(config.clone())?.run(frames, frame_range, score_maps, embeddings)
}
