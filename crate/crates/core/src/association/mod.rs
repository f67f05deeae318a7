//! Hierarchical data association and track lifecycle.

mod assignment;
mod tracker;

pub use assignment::{min_cost_match, Assignment};
pub use tracker::{run_sequence, StepStats, Track, TrackState, Tracker};
