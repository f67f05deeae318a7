//! Online multi-object tracking by detection.
//!
//! Each frame, candidate boxes are collected from detections and from
//! Kalman predictions of existing tracks, scored by position-sensitive
//! score-map pooling fused with tracklet confidence, pruned by NMS, and
//! associated to tracks in two stages: appearance distance for detections,
//! then IoU for whatever remains. Network outputs (score maps, appearance
//! embeddings) are supplied by provider traits.

pub mod appearance;
pub mod association;
pub mod classifier;
pub mod config;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod mot;
pub mod motion;
pub mod overlay;
pub mod scenario;
pub mod selection;
pub mod types;

mod rng;

pub use config::TrackerConfig;
pub use error::{Error, Result};
pub use geometry::{iou, BoundingBox};
pub use types::{Candidate, CandidateSource, Detection, FrameResult, TrackId};
