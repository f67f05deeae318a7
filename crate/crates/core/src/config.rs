//! Tracker configuration as a flat TOML key-value document.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    /// Position-sensitive grid size; `k * k` score planes.
    pub k: usize,
    /// IoU above which a lower-scored candidate is suppressed.
    pub tau_nms: f64,
    /// Minimum unified score for a selected candidate.
    pub tau_s: f64,
    /// Maximum appearance distance in the first association stage.
    pub tau_d: f64,
    /// Minimum IoU in the second association stage.
    pub tau_iou: f64,
    /// Decay rate of tracklet confidence with prediction-only frames.
    pub alpha: f64,
    /// Triplet loss margin.
    pub margin_m: f64,
    pub max_lost_frames: u32,
    pub gallery_capacity: usize,
    pub embedding_dim: usize,
    pub normalize_embeddings: bool,
    /// Run the appearance stage before IoU matching.
    pub use_appearance: bool,
    /// Add Kalman predictions of existing tracks to the candidate pool.
    pub use_track_candidates: bool,
    /// In whole-sequence runs, also report a track's tentative boxes once
    /// it is confirmed, in the frames where they were associated.
    pub backfill_tentative: bool,
    /// Process/measurement position std as a fraction of box height.
    pub std_weight_position: f64,
    /// Process velocity std as a fraction of box height.
    pub std_weight_velocity: f64,
    /// Initial position std multiplier (times `std_weight_position * h`).
    pub init_position_factor: f64,
    /// Initial velocity std multiplier (times `std_weight_velocity * h`).
    pub init_velocity_factor: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            k: 7,
            tau_nms: 0.3,
            tau_s: 0.4,
            tau_d: 0.4,
            tau_iou: 0.3,
            alpha: 0.05,
            margin_m: 0.2,
            max_lost_frames: 30,
            gallery_capacity: 100,
            embedding_dim: 512,
            normalize_embeddings: false,
            use_appearance: true,
            use_track_candidates: true,
            backfill_tentative: true,
            std_weight_position: 1.0 / 20.0,
            std_weight_velocity: 1.0 / 160.0,
            init_position_factor: 2.0,
            init_velocity_factor: 10.0,
        }
    }
}

impl TrackerConfig {
    /// Parses a config document. Absent keys take their defaults; unknown
    /// keys are rejected.
    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with_overrides(text, &[])
    }

    /// Parses `text`, then replaces individual keys with `overrides`
    /// (`key`, TOML-encoded value) before validation.
    pub fn parse_with_overrides(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::ConfigParse(e.to_string()))?;
        for (key, raw) in overrides {
            let value: toml::Value = format!("v = {raw}")
                .parse::<toml::Table>()
                .map_err(|e| Error::ConfigParse(format!("override `{key}`: {e}")))?
                .remove("v")
                .expect("single key table");
            table.insert(key.clone(), value);
        }
        let cfg: TrackerConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::ConfigParse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let unit = [
            ("tau_nms", self.tau_nms),
            ("tau_s", self.tau_s),
            ("tau_d", self.tau_d),
            ("tau_iou", self.tau_iou),
        ];
        for (key, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Validation {
                    key,
                    reason: format!("{v} is outside [0, 1]"),
                });
            }
        }
        let positive = [
            ("alpha", self.alpha),
            ("margin_m", self.margin_m),
            ("std_weight_position", self.std_weight_position),
            ("std_weight_velocity", self.std_weight_velocity),
            ("init_position_factor", self.init_position_factor),
            ("init_velocity_factor", self.init_velocity_factor),
        ];
        for (key, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Validation {
                    key,
                    reason: format!("{v} must be positive"),
                });
            }
        }
        if self.k == 0 {
            return Err(Error::Validation {
                key: "k",
                reason: "grid size must be at least 1".into(),
            });
        }
        if self.gallery_capacity == 0 {
            return Err(Error::Validation {
                key: "gallery_capacity",
                reason: "capacity must be at least 1".into(),
            });
        }
        if self.embedding_dim == 0 {
            return Err(Error::Validation {
                key: "embedding_dim",
                reason: "dimension must be at least 1".into(),
            });
        }
        Ok(())
    }
}
