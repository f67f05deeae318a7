//! Synthetic sequences: piecewise-linear object paths, a noisy detector,
//! and the matching score-map and embedding stand-ins.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::appearance::{write_embedding_file, EmbeddingProvider, EmbeddingRecord, OracleEmbeddings};
use crate::classifier::{write_score_map_file, synth_score_maps, SynthParams, SyntheticScoreMaps};
use crate::config::TrackerConfig;
use crate::error::{Error, Result};
use crate::geometry::{iou, BoundingBox};
use crate::metrics::GroundTruth;
use crate::mot;
use crate::rng;
use crate::types::Detection;

/// Object center at a given frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub frame: u32,
    pub x: f64,
    pub y: f64,
}

/// One object moving between waypoints; it exists from the first waypoint's
/// frame to the last one's.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectPath {
    pub width: f64,
    pub height: f64,
    pub waypoints: Vec<Waypoint>,
}

impl ObjectPath {
    /// Box at `frame`, or `None` outside the object's lifespan.
    pub fn box_at(&self, frame: u32) -> Option<BoundingBox> {
        let first = self.waypoints.first()?;
        let last = self.waypoints.last()?;
        if frame < first.frame || frame > last.frame {
            return None;
        }
        let (cx, cy) = match self.waypoints.windows(2).find(|w| frame <= w[1].frame) {
            Some(w) if w[1].frame > w[0].frame => {
                let t = (frame - w[0].frame) as f64 / (w[1].frame - w[0].frame) as f64;
                (w[0].x + t * (w[1].x - w[0].x), w[0].y + t * (w[1].y - w[0].y))
            }
            Some(w) => (w[1].x, w[1].y),
            None => (first.x, first.y),
        };
        BoundingBox::new(
            round2(cx - self.width / 2.0),
            round2(cy - self.height / 2.0),
            self.width,
            self.height,
        )
        .ok()
    }
}

/// Everything that defines a synthetic sequence. Frames run from 1 to
/// `frame_count`; object ids from 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    /// Objects with random straight paths, used when `paths` is empty.
    pub num_objects: usize,
    pub frame_count: u32,
    pub frame_width: u32,
    pub frame_height: u32,
    pub paths: Vec<ObjectPath>,
    /// Keep random paths from overlapping by more than this IoU.
    pub max_random_overlap: f64,
    /// Probability that a true object is missed by the detector.
    pub dropout: f64,
    /// Standard deviation, in pixels, added to each detection coordinate.
    pub jitter_sigma: f64,
    /// Probability of one spurious detection per frame.
    pub fp_rate: f64,
    pub seed: u64,
    pub k: usize,
    pub map_scale: f32,
    pub map_noise_sigma: f64,
    pub embedding_dim: usize,
    pub embedding_sigma: f64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            num_objects: 5,
            frame_count: 100,
            frame_width: 640,
            frame_height: 480,
            paths: Vec::new(),
            max_random_overlap: 0.0,
            dropout: 0.0,
            jitter_sigma: 0.0,
            fp_rate: 0.0,
            seed: 0,
            k: 7,
            map_scale: 8.0,
            map_noise_sigma: 0.0,
            embedding_dim: 128,
            embedding_sigma: 0.0,
        }
    }
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

fn check_probability(key: &'static str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::Validation {
            key,
            reason: format!("{v} is not in [0, 1]"),
        });
    }
    Ok(())
}

impl ScenarioSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario spec is always representable")
    }

    pub fn validate(&self) -> Result<()> {
        check_probability("dropout", self.dropout)?;
        check_probability("fp_rate", self.fp_rate)?;
        check_probability("max_random_overlap", self.max_random_overlap)?;
        let positive = |key: &'static str, ok: bool, v: String| {
            if ok {
                Ok(())
            } else {
                Err(Error::Validation {
                    key,
                    reason: format!("{v} must be positive"),
                })
            }
        };
        positive("frame_count", self.frame_count >= 1, self.frame_count.to_string())?;
        positive("frame_width", self.frame_width >= 1, self.frame_width.to_string())?;
        positive("frame_height", self.frame_height >= 1, self.frame_height.to_string())?;
        positive("k", self.k >= 1, self.k.to_string())?;
        positive("embedding_dim", self.embedding_dim >= 1, self.embedding_dim.to_string())?;
        positive("map_scale", self.map_scale.is_finite() && self.map_scale > 0.0, self.map_scale.to_string())?;
        for (key, v) in [
            ("jitter_sigma", self.jitter_sigma),
            ("map_noise_sigma", self.map_noise_sigma),
            ("embedding_sigma", self.embedding_sigma),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Validation {
                    key,
                    reason: format!("{v} must be non-negative"),
                });
            }
        }
        for (i, p) in self.paths.iter().enumerate() {
            if !(p.width > 0.0 && p.height > 0.0 && p.width.is_finite() && p.height.is_finite()) {
                return Err(Error::Validation {
                    key: "paths",
                    reason: format!("object {} has non-positive size", i + 1),
                });
            }
            if p.waypoints.is_empty() || p.waypoints.windows(2).any(|w| w[1].frame < w[0].frame) {
                return Err(Error::Validation {
                    key: "paths",
                    reason: format!("object {} needs waypoints in frame order", i + 1),
                });
            }
        }
        Ok(())
    }

    /// Pairs of objects that walk towards each other and cross, stacked in
    /// horizontal lanes. Sizes, speeds, crossing place and crossing time
    /// vary with `seed`; objects exist while fully inside the frame.
    pub fn crossing(pairs: usize, frame_count: u32, seed: u64) -> Self {
        let mut rng = rng::seeded(&[seed, 0xC7]);
        let (fw, fh) = (640u32, 480u32);
        let end = frame_count.max(2);
        let lane = fh as f64 / pairs.max(1) as f64;
        let mut paths = Vec::new();
        for p in 0..pairs {
            let h = rng.random_range(70.0..90.0f64).round();
            let w = (h * 0.4).round();
            let y = lane * (p as f64 + 0.5);
            let dy = (rng.random_range(-0.1..0.1) * h).round();
            let speed = rng.random_range(2.0..4.0f64);
            let t_cross = rng.random_range(0.3..0.7) * end as f64;
            let x_cross = rng.random_range(0.35..0.65) * fw as f64;
            let (lo, hi) = (w / 2.0, fw as f64 - w / 2.0);
            for (dir, y) in [(1.0, y), (-1.0, y + dy)] {
                let x_at = |t: u32| x_cross + dir * speed * (t as f64 - t_cross);
                let inside = |t: &u32| (lo..=hi).contains(&x_at(*t));
                let (Some(t0), Some(t1)) = ((1..=end).find(inside), (1..=end).rev().find(inside)) else {
                    continue;
                };
                paths.push(ObjectPath {
                    width: w,
                    height: h,
                    waypoints: [t0, t1].iter().map(|&frame| Waypoint { frame, x: x_at(frame), y }).collect(),
                });
            }
        }
        Self {
            num_objects: paths.len(),
            frame_count,
            frame_width: fw,
            frame_height: fh,
            paths,
            seed,
            ..Self::default()
        }
    }

    fn synth_params(&self) -> SynthParams {
        SynthParams {
            k: self.k,
            scale: self.map_scale,
            noise_sigma: self.map_noise_sigma,
            seed: rng::mix(&[self.seed, 0x5A]),
            ..SynthParams::default()
        }
    }

    /// Tracker configuration consistent with the generated fixtures.
    pub fn tracker_config(&self) -> TrackerConfig {
        TrackerConfig {
            k: self.k,
            embedding_dim: self.embedding_dim,
            ..TrackerConfig::default()
        }
    }

    fn random_paths(&self) -> Vec<ObjectPath> {
        let (fw, fh) = (self.frame_width as f64, self.frame_height as f64);
        let end = self.frame_count;
        let mut paths: Vec<ObjectPath> = Vec::new();
        for i in 0..self.num_objects {
            let mut rng = rng::seeded(&[self.seed, 0x9A, i as u64]);
            let mut candidate = None;
            for _ in 0..200 {
                let h = rng.random_range(0.12..0.25) * fh;
                let w = (h * rng.random_range(0.35..0.5)).round().max(1.0);
                let h = h.round();
                let point = |rng: &mut rand_chacha::ChaCha8Rng| {
                    let x = if fw > w { rng.random_range(w / 2.0..=fw - w / 2.0) } else { fw / 2.0 };
                    let y = if fh > h { rng.random_range(h / 2.0..=fh - h / 2.0) } else { fh / 2.0 };
                    (x, y)
                };
                let (a, b) = (point(&mut rng), point(&mut rng));
                let path = ObjectPath {
                    width: w,
                    height: h,
                    waypoints: vec![Waypoint { frame: 1, x: a.0, y: a.1 }, Waypoint { frame: end, x: b.0, y: b.1 }],
                };
                let clear = paths.iter().all(|other| {
                    (1..=end).all(|f| match (path.box_at(f), other.box_at(f)) {
                        (Some(p), Some(o)) => iou(&p, &o) <= self.max_random_overlap,
                        _ => true,
                    })
                });
                let done = clear || self.max_random_overlap >= 1.0;
                candidate = Some(path);
                if done {
                    break;
                }
            }
            if let Some(p) = candidate {
                paths.push(p);
            }
        }
        paths
    }
}

/// A generated sequence held in memory.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub paths: Vec<ObjectPath>,
    pub ground_truth: GroundTruth,
    pub detections: BTreeMap<u32, Vec<Detection>>,
}

/// Output file locations written by [`Scenario::write`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioFiles {
    pub ground_truth: PathBuf,
    pub detections: PathBuf,
    pub score_maps: PathBuf,
    pub embeddings: PathBuf,
    pub config: PathBuf,
    pub spec: PathBuf,
}

/// Deterministic in `spec.seed`.
pub fn gen_scenario(spec: &ScenarioSpec) -> Result<Scenario> {
    spec.validate()?;
    let paths = if spec.paths.is_empty() { spec.random_paths() } else { spec.paths.clone() };
    let (fw, fh) = (spec.frame_width as f64, spec.frame_height as f64);

    let mut gt = BTreeMap::new();
    let mut detections = BTreeMap::new();
    let jitter = Normal::new(0.0, spec.jitter_sigma).expect("validated sigma");
    for frame in 1..=spec.frame_count {
        let mut rng = rng::seeded(&[spec.seed, 0xDE, frame as u64]);
        let mut objects = Vec::new();
        let mut dets = Vec::new();
        for (i, path) in paths.iter().enumerate() {
            let Some(b) = path.box_at(frame) else { continue };
            objects.push((i as u64 + 1, b));
            // draw every variate so dropout does not shift later streams
            let dropped = rng.random_bool(spec.dropout);
            let noise: [f64; 4] = std::array::from_fn(|_| jitter.sample(&mut rng));
            let confidence = round2(rng.random_range(0.5..1.0));
            if dropped {
                continue;
            }
            let bbox = BoundingBox::new(
                round2(b.x0() + noise[0]),
                round2(b.y0() + noise[1]),
                round2((b.w() + noise[2]).max(1.0)),
                round2((b.h() + noise[3]).max(1.0)),
            )?;
            dets.push(Detection { frame, bbox, confidence });
        }
        if rng.random_bool(spec.fp_rate) {
            let h = rng.random_range(0.12..0.25) * fh;
            let w = h * 0.4;
            let bbox = BoundingBox::new(
                round2(rng.random_range(0.0..(fw - w).max(1.0))),
                round2(rng.random_range(0.0..(fh - h).max(1.0))),
                round2(w),
                round2(h),
            )?;
            let confidence = round2(rng.random_range(0.3..0.7));
            dets.push(Detection { frame, bbox, confidence });
        }
        gt.insert(frame, objects);
        detections.insert(frame, dets);
    }

    Ok(Scenario {
        spec: spec.clone(),
        paths,
        ground_truth: GroundTruth::new(gt)?,
        detections,
    })
}

impl Scenario {
    pub fn frame_dims(&self) -> (u32, u32) {
        (self.spec.frame_width, self.spec.frame_height)
    }

    fn objects(&self) -> BTreeMap<u32, Vec<BoundingBox>> {
        self.ground_truth
            .frames()
            .iter()
            .map(|(&f, objs)| (f, objs.iter().map(|o| o.1).collect()))
            .collect()
    }

    /// Score maps responding on the true objects only, so spurious
    /// detections score low.
    pub fn score_maps(&self) -> SyntheticScoreMaps {
        SyntheticScoreMaps::new(self.objects(), self.frame_dims(), self.spec.synth_params())
    }

    pub fn embeddings(&self) -> Result<OracleEmbeddings> {
        let identities = self
            .ground_truth
            .frames()
            .iter()
            .map(|(&f, objs)| (f, objs.iter().map(|&(id, b)| (b, id)).collect()))
            .collect();
        OracleEmbeddings::new(
            identities,
            self.spec.embedding_dim,
            self.spec.embedding_sigma,
            rng::mix(&[self.spec.seed, 0xE3]),
        )
    }

    /// One record per detection, as a stored re-identification run would
    /// produce.
    pub fn embedding_records(&self) -> Result<Vec<EmbeddingRecord>> {
        let oracle = self.embeddings()?;
        let mut records = Vec::new();
        for (&frame, dets) in &self.detections {
            for d in dets {
                records.push(EmbeddingRecord {
                    frame,
                    bbox: d.bbox,
                    embedding: oracle.embed(frame, &d.bbox)?,
                });
            }
        }
        Ok(records)
    }

    /// Writes `gt.txt`, `det.txt`, `scoremaps.smap`, `reid.bin`,
    /// `tracker.toml` and `scenario.toml` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<ScenarioFiles> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = ScenarioFiles {
            ground_truth: dir.join("gt.txt"),
            detections: dir.join("det.txt"),
            score_maps: dir.join("scoremaps.smap"),
            embeddings: dir.join("reid.bin"),
            config: dir.join("tracker.toml"),
            spec: dir.join("scenario.toml"),
        };
        mot::write_ground_truth(&self.ground_truth, &files.ground_truth)?;
        mot::write_detections(&self.detections, &files.detections)?;

        let objects = self.objects();
        let params = self.spec.synth_params();
        let mut grids = Vec::new();
        for frame in 1..=self.spec.frame_count {
            let objs = objects.get(&frame).map(Vec::as_slice).unwrap_or(&[]);
            grids.push(synth_score_maps(frame, objs, self.frame_dims(), &params)?);
        }
        write_score_map_file(&files.score_maps, &grids)?;

        write_embedding_file(&files.embeddings, self.spec.embedding_dim, &self.embedding_records()?)?;
        let config = self.spec.tracker_config().to_toml();
        std::fs::write(&files.config, config).map_err(|e| Error::io(&files.config, e))?;
        std::fs::write(&files.spec, self.spec.to_toml()).map_err(|e| Error::io(&files.spec, e))?;
        Ok(files)
    }
}
